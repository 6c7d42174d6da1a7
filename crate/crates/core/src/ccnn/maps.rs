//! Full cross-correlations and the power-sum construction of the
//! correlator maps.

use crate::d4::D4;
use crate::data::RealMap;
use crate::error::{Error, Result};

/// Scatter form of the full cross-correlation:
/// `out[x] = Σ_a f(a)·in[x + a − (F−1)]`, output `(h+fh−1) × (w+fw−1)`.
/// `out` must be zeroed by the caller.
pub(crate) fn conv_full_into(input: &[f64], h: usize, w: usize, filter: &[f64], fh: usize, fw: usize, out: &mut [f64]) {
    let ow = w + fw - 1;
    debug_assert_eq!(out.len(), (h + fh - 1) * ow);
    for ar in 0..fh {
        for ac in 0..fw {
            let fv = filter[ar * fw + ac];
            if fv == 0.0 {
                continue;
            }
            for r in 0..h {
                let orow = r + fh - 1 - ar;
                let start = orow * ow + fw - 1 - ac;
                let dst = &mut out[start..start + w];
                let src = &input[r * w..(r + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += fv * s;
                }
            }
        }
    }
}

/// Adjoint of [`conv_full_into`] with respect to the filter:
/// `grad[a] += scale(a) · Σ_x dout[x]·in[x + a − (F−1)]`.
pub(crate) fn filter_grad_into(
    input: &[f64],
    h: usize,
    w: usize,
    dout: &[f64],
    fh: usize,
    fw: usize,
    scale: impl Fn(usize) -> f64,
    grad: &mut [f64],
) {
    let ow = w + fw - 1;
    for ar in 0..fh {
        for ac in 0..fw {
            let i = ar * fw + ac;
            let s = scale(i);
            if s == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for r in 0..h {
                let orow = r + fh - 1 - ar;
                let start = orow * ow + fw - 1 - ac;
                let d = &dout[start..start + w];
                let src = &input[r * w..(r + 1) * w];
                acc += d.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
            }
            grad[i] += s * acc;
        }
    }
}

/// Full cross-correlation with zero padding `F − 1` on every edge.
pub fn conv_full(input: &RealMap, filter: &RealMap) -> RealMap {
    let (h, w) = input.shape();
    let (fh, fw) = filter.shape();
    let mut out = RealMap::zeros(h + fh - 1, w + fw - 1);
    conv_full_into(input.as_slice(), h, w, filter.as_slice(), fh, fw, out.as_mut_slice());
    out
}

/// `C^(1..=m_max)` through the power sums
/// `C² = C1² − S2`, `C³ = C1³ − 3·C1·S2 + 2·S3`.
pub fn correlator_maps(input: &RealMap, filter: &RealMap, m_max: usize) -> Result<Vec<RealMap>> {
    if !(1..=3).contains(&m_max) {
        return Err(Error::invalid(format!("correlator order {m_max} not in 1..=3")));
    }
    let c1 = conv_full(input, filter);
    let mut out = vec![c1.clone()];
    if m_max >= 2 {
        let s2 = conv_full(&input.map(|v| v * v), &filter.map(|v| v * v));
        let c2 = RealMap::from_fn(c1.rows(), c1.cols(), |r, c| {
            let a = c1[(r, c)];
            a * a - s2[(r, c)]
        });
        out.push(c2);
        if m_max == 3 {
            let s3 = conv_full(&input.map(|v| v * v * v), &filter.map(|v| v * v * v));
            let c3 = RealMap::from_fn(c1.rows(), c1.cols(), |r, c| {
                let a = c1[(r, c)];
                a * a * a - 3.0 * a * s2[(r, c)] + 2.0 * s3[(r, c)]
            });
            out.push(c3);
        }
    }
    Ok(out)
}

/// `C̃^(m) = Σ_g g·C^(m)[f∘g]`, summed over the eight group elements.
///
/// Transforming the filter and then the output map is the same as
/// transforming the input with the filter held fixed, which is how it is
/// evaluated here: `C̃^(m)[δn] = Σ_g C^(m)_f[g·δn]`.
pub fn d4_symmetrized_maps(input: &RealMap, filter: &RealMap, m: usize) -> Result<RealMap> {
    if m == 0 {
        return Err(Error::invalid("correlator order must be at least 1"));
    }
    let (h, w) = input.shape();
    let (fh, fw) = filter.shape();
    if h != w || fh != fw {
        return Err(Error::invalid("D4 symmetrization needs square inputs and filters"));
    }
    let mut acc = RealMap::zeros(h + fh - 1, w + fw - 1);
    for g in D4::ALL {
        let maps = correlator_maps(&g.act(input), filter, m)?;
        acc.add_assign(&maps[m - 1])?;
    }
    Ok(acc)
}

/// `c = Σ_x w(x)·C̃(x)`.
pub fn spatial_pool(map: &RealMap, weight: &RealMap) -> Result<f64> {
    map.dot(weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut impl Rng, h: usize, w: usize) -> RealMap {
        RealMap::from_fn(h, w, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Padded gather form, written independently of the scatter kernel.
    fn conv_naive(input: &RealMap, f: &RealMap) -> RealMap {
        let (h, w) = input.shape();
        let (fh, fw) = f.shape();
        let padded = crate::data::zero_pad(input, fh.max(fw) - 1);
        let p = fh.max(fw) - 1;
        RealMap::from_fn(h + fh - 1, w + fw - 1, |r, c| {
            let mut s = 0.0;
            for a in 0..fh {
                for b in 0..fw {
                    // padded array is offset by p on both axes
                    s += f[(a, b)] * padded[(r + a + p - (fh - 1), c + b + p - (fw - 1))];
                }
            }
            s
        })
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_map(&mut rng, 4, 4);
        let out = conv_full(&x, &RealMap::filled(1, 1, 1.0));
        assert_eq!(out, x);
    }

    #[test]
    fn window_sum_of_constant() {
        let out = conv_full(&RealMap::filled(4, 4, 0.7), &RealMap::filled(2, 2, 1.0));
        assert_eq!(out.shape(), (5, 5));
        for r in 1..4 {
            for c in 1..4 {
                assert!((out[(r, c)] - 2.8).abs() < 1e-12);
            }
        }
        assert!((out[(0, 0)] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = random_map(&mut rng, 5, 5);
            let f = random_map(&mut rng, 3, 3);
            assert!(conv_full(&x, &f).max_abs_diff(&conv_naive(&x, &f)) < 1e-12);
        }
    }

    #[test]
    fn constant_input_power_sums() {
        let c = 0.3;
        let maps = correlator_maps(&RealMap::filled(4, 4, c), &RealMap::filled(2, 2, 1.0), 3).unwrap();
        for r in 1..4 {
            for col in 1..4 {
                assert!((maps[1][(r, col)] - 12.0 * c * c).abs() < 1e-12);
                assert!((maps[2][(r, col)] - 24.0 * c * c * c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_pixel_filter_has_no_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_map(&mut rng, 5, 5);
        let mut f = RealMap::zeros(3, 3);
        f[(1, 2)] = 1.7;
        let maps = correlator_maps(&x, &f, 3).unwrap();
        assert!(maps[1].as_slice().iter().all(|v| v.abs() < 1e-12));
        assert!(maps[2].as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn filter_gradient_is_the_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_map(&mut rng, 5, 4);
        let dout = random_map(&mut rng, 7, 5);
        let mut grad = vec![0.0; 6];
        filter_grad_into(x.as_slice(), 5, 4, dout.as_slice(), 3, 2, |_| 1.0, &mut grad);
        for i in 0..6 {
            let mut e = RealMap::zeros(3, 2);
            e.as_mut_slice()[i] = 1.0;
            let expect = conv_full(&x, &e).dot(&dout).unwrap();
            assert!((grad[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_inputs_give_eight_copies() {
        let f = crate::d4::symmetrize(&RealMap::from_rows(&[
            vec![0.2, 0.5, 0.1],
            vec![0.3, 1.0, 0.4],
            vec![0.0, 0.6, 0.9],
        ])
        .unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = crate::d4::symmetrize(&random_map(&mut rng, 5, 5));
        for m in 1..=3 {
            let sym = d4_symmetrized_maps(&x, &f, m).unwrap();
            let mut plain = correlator_maps(&x, &f, m).unwrap().pop().unwrap();
            plain.scale(8.0);
            assert!(sym.max_abs_diff(&plain) < 1e-12);
        }
    }

    #[test]
    fn pooling() {
        let c = RealMap::filled(3, 3, 0.5);
        assert_eq!(spatial_pool(&c, &RealMap::filled(3, 3, 1.0)).unwrap(), 4.5);
        assert_eq!(spatial_pool(&c, &RealMap::zeros(3, 3)).unwrap(), 0.0);
        assert!(spatial_pool(&c, &RealMap::zeros(2, 3)).is_err());
    }
}
