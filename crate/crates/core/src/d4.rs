//! The dihedral group of the square acting on arrays, k-grids and
//! displacement vectors.
//!
//! Each element is a signed permutation matrix acting on centered
//! coordinates. On an `n × n` array the center sits at `(n−1)/2`, so for
//! even `n` it is a half-integer and the actions reduce to index reversal
//! and transposition.

use crate::data::RealMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct D4 {
    m: [[i8; 2]; 2],
}

impl D4 {
    pub const IDENTITY: D4 = D4 {
        m: [[1, 0], [0, 1]],
    };

    /// The eight group elements; the identity comes first.
    pub const ALL: [D4; 8] = [
        D4 { m: [[1, 0], [0, 1]] },
        D4 { m: [[0, -1], [1, 0]] },
        D4 { m: [[-1, 0], [0, -1]] },
        D4 { m: [[0, 1], [-1, 0]] },
        D4 { m: [[1, 0], [0, -1]] },
        D4 { m: [[-1, 0], [0, 1]] },
        D4 { m: [[0, 1], [1, 0]] },
        D4 { m: [[0, -1], [-1, 0]] },
    ];

    pub fn matrix(&self) -> [[i8; 2]; 2] {
        self.m
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &D4) -> D4 {
        let a = self.m;
        let b = other.m;
        let mut m = [[0i8; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        D4 { m }
    }

    pub fn inverse(&self) -> D4 {
        // orthogonal: inverse is the transpose
        let m = self.m;
        D4 {
            m: [[m[0][0], m[1][0]], [m[0][1], m[1][1]]],
        }
    }

    /// Acts on an integer displacement `(dr, dc)`.
    pub fn apply_vec(&self, (r, c): (i64, i64)) -> (i64, i64) {
        let m = self.m;
        (
            m[0][0] as i64 * r + m[0][1] as i64 * c,
            m[1][0] as i64 * r + m[1][1] as i64 * c,
        )
    }

    /// Image of array index `(r, c)` in an `n × n` array, rotating about the
    /// array center.
    pub fn apply_index(&self, (r, c): (usize, usize), n: usize) -> (usize, usize) {
        // doubled centered coordinates keep half-integer centers exact
        let off = n as i64 - 1;
        let (u, v) = self.apply_vec((2 * r as i64 - off, 2 * c as i64 - off));
        (((u + off) / 2) as usize, ((v + off) / 2) as usize)
    }

    /// Image of k-grid index `(a, b)` on a `k × k` periodic grid.
    pub fn apply_k(&self, (a, b): (usize, usize), k: usize) -> (usize, usize) {
        let (u, v) = self.apply_vec((a as i64, b as i64));
        let k = k as i64;
        (u.rem_euclid(k) as usize, v.rem_euclid(k) as usize)
    }

    /// `(g·A)(g p) = A(p)` for a square array.
    pub fn act(&self, map: &RealMap) -> RealMap {
        let (n, m) = map.shape();
        assert_eq!(n, m, "D4 acts on square arrays only");
        let mut out = RealMap::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                out[self.apply_index((r, c), n)] = map[(r, c)];
            }
        }
        out
    }

    /// Whether this element maps an `h × w` array onto itself.
    pub fn preserves_shape(&self, h: usize, w: usize) -> bool {
        h == w || self.m[0][1] == 0
    }

    /// Action on a possibly rectangular array; only valid when
    /// [`preserves_shape`](Self::preserves_shape) holds.
    pub fn act_rect(&self, map: &RealMap) -> RealMap {
        let (h, w) = map.shape();
        assert!(self.preserves_shape(h, w));
        if h == w {
            return self.act(map);
        }
        let flip_r = self.m[0][0] < 0;
        let flip_c = self.m[1][1] < 0;
        RealMap::from_fn(h, w, |r, c| {
            let sr = if flip_r { h - 1 - r } else { r };
            let sc = if flip_c { w - 1 - c } else { c };
            map[(sr, sc)]
        })
    }
}

/// Group average `(1/8) Σ_g g·A`, the projection onto D4-invariant maps.
///
/// Each orbit is summed in sorted index order, so the result is exactly
/// (bitwise) invariant.
pub fn symmetrize(map: &RealMap) -> RealMap {
    let (n, _) = map.shape();
    let mut out = RealMap::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let orbit = sorted_orbit(|g| g.apply_index((r, c), n));
            out[(r, c)] = orbit.iter().map(|&p| map[p]).sum::<f64>() / 8.0;
        }
    }
    out
}

fn sorted_orbit(image: impl Fn(&D4) -> (usize, usize)) -> [(usize, usize); 8] {
    let mut orbit = D4::ALL.map(|g| image(&g));
    orbit.sort_unstable();
    orbit
}

/// Group sum over a `k × k` periodic k-grid: `Σ_g A(g k)`.
pub fn symmetrize_k_sum(grid: &RealMap) -> RealMap {
    let (k, _) = grid.shape();
    let mut out = RealMap::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let orbit = sorted_orbit(|g| g.apply_k((a, b), k));
            out[(a, b)] = orbit.iter().map(|&p| grid[p]).sum();
        }
    }
    out
}

pub fn is_symmetric(map: &RealMap, tol: f64) -> bool {
    D4::ALL.iter().all(|g| g.act(map).max_abs_diff(map) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_is_closed_with_inverses() {
        for a in D4::ALL {
            assert_eq!(a.compose(&a.inverse()), D4::IDENTITY);
            for b in D4::ALL {
                assert!(D4::ALL.contains(&a.compose(&b)));
            }
        }
        let mut unique = D4::ALL.to_vec();
        unique.dedup();
        assert_eq!(unique.len(), 8);
    }

    #[test]
    fn action_is_a_homomorphism_on_arrays() {
        let m = RealMap::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        for a in D4::ALL {
            for b in D4::ALL {
                let lhs = a.act(&b.act(&m));
                let rhs = a.compose(&b).act(&m);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn index_action_stays_in_bounds_for_odd_and_even() {
        for n in [1, 2, 3, 5, 6] {
            for g in D4::ALL {
                for r in 0..n {
                    for c in 0..n {
                        let (a, b) = g.apply_index((r, c), n);
                        assert!(a < n && b < n);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetrized_map_is_invariant() {
        let m = RealMap::from_fn(5, 5, |r, c| ((r * 7 + c * 3) % 11) as f64);
        let s = symmetrize(&m);
        assert!(is_symmetric(&s, 0.0));
        assert!((s.sum() - m.sum()).abs() < 1e-12);
    }

    #[test]
    fn rect_action_matches_flips() {
        let m = RealMap::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let flipped = D4::ALL[5].act_rect(&m);
        assert_eq!(flipped.as_slice(), &[3.0, 4.0, 5.0, 0.0, 1.0, 2.0]);
        assert!(!D4::ALL[1].preserves_shape(2, 3));
    }
}
