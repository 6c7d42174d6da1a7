//! Discrete Fourier transforms of lattice maps and the density-shift
//! invariant structure-factor features used for clustering.
//!
//! Wavevectors live on a `K × K` grid, `k_j ∈ {0, 2π/K, …, (K−1)2π/K}`, and
//! transforms use the convention `F(k) = Σ_x exp(−i k·x) m(x)` with `x`
//! counted from the top-left site.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::{RealMap, SnapshotSet};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 16;

/// Complex amplitudes on a `K × K` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    k: usize,
    values: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.values[a * self.k + b]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn power(&self) -> SpectralGrid {
        SpectralGrid {
            k: self.k,
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
        }
    }
}

/// Real values (power or weights) on a `K × K` grid, row-major.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectralGrid {
    k: usize,
    values: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * k {
            return Err(Error::shape(k * k, values.len()));
        }
        Ok(Self { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    /// Row-major feature vector.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_map(&self) -> RealMap {
        RealMap::from_vec(self.k, self.k, self.values.clone()).expect("square grid")
    }

    pub fn from_map(map: &RealMap) -> Result<Self> {
        if map.rows() != map.cols() {
            return Err(Error::shape("square grid", format!("{:?}", map.shape())));
        }
        Ok(Self {
            k: map.rows(),
            values: map.as_slice().to_vec(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Grid index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.k, best % self.k)
    }

    /// The `n` grid points with the largest values, in descending order.
    pub fn top(&self, n: usize) -> Vec<(usize, usize)> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(n)
            .map(|i| (i / self.k, i % self.k))
            .collect()
    }

    /// Writes `kx_index,ky_index,value` rows; `kx_index` runs along the
    /// first (row) axis.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "kx_index,ky_index,value")?;
        for a in 0..self.k {
            for b in 0..self.k {
                writeln!(out, "{a},{b},{}", self.get(a, b))?;
            }
        }
        Ok(())
    }
}

/// Wavevector component for grid index `j`.
pub fn wavenumber(j: usize, k: usize) -> f64 {
    2.0 * PI * j as f64 / k as f64
}

fn check_resolution(map: &RealMap, k: usize) -> Result<()> {
    let (h, w) = map.shape();
    if k == 0 || k < h.max(w) {
        return Err(Error::invalid(format!(
            "Fourier resolution {k} is smaller than the {h}x{w} map"
        )));
    }
    Ok(())
}

/// Direct-summation DFT, evaluated separably (rows, then columns).
pub fn dft2(map: &RealMap, k: usize) -> Result<ComplexGrid> {
    check_resolution(map, k)?;
    let (h, w) = map.shape();
    let twiddle: Vec<Complex64> = (0..k)
        .map(|j| Complex64::from_polar(1.0, -wavenumber(j, k)))
        .collect();
    // phase(a, x) = twiddle[(a * x) mod k]
    let mut partial = vec![Complex64::new(0.0, 0.0); h * k];
    for r in 0..h {
        for b in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..w {
                acc += twiddle[(b * c) % k] * map[(r, c)];
            }
            partial[r * k + b] = acc;
        }
    }
    let mut values = vec![Complex64::new(0.0, 0.0); k * k];
    for a in 0..k {
        for r in 0..h {
            let t = twiddle[(a * r) % k];
            for b in 0..k {
                values[a * k + b] += t * partial[r * k + b];
            }
        }
    }
    Ok(ComplexGrid { k, values })
}

/// Zero-padded FFT route; agrees with [`dft2`] to rounding.
pub fn dft2_fft(map: &RealMap, k: usize) -> Result<ComplexGrid> {
    check_resolution(map, k)?;
    let mut planner = FftPlanner::new();
    Ok(fft_with(&mut planner, map, k))
}

fn fft_with(planner: &mut FftPlanner<f64>, map: &RealMap, k: usize) -> ComplexGrid {
    let fft = planner.plan_fft_forward(k);
    let (h, w) = map.shape();
    let mut values = vec![Complex64::new(0.0, 0.0); k * k];
    for r in 0..h {
        for c in 0..w {
            values[r * k + c] = Complex64::new(map[(r, c)], 0.0);
        }
        fft.process(&mut values[r * k..(r + 1) * k]);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); k];
    for b in 0..k {
        for a in 0..k {
            column[a] = values[a * k + b];
        }
        fft.process(&mut column);
        for a in 0..k {
            values[a * k + b] = column[a];
        }
    }
    ComplexGrid { k, values }
}

/// δn̂(k): average of |F(k)|² over the set's globally normalized snapshots.
pub fn mean_power_spectrum(set: &SnapshotSet, k: usize) -> Result<SpectralGrid> {
    if set.is_empty() {
        return Err(Error::Empty("snapshot set"));
    }
    let l = set.lattice();
    if k == 0 || k < l.height.max(l.width) {
        return Err(Error::invalid(format!(
            "Fourier resolution {k} is smaller than the {}x{} lattice",
            l.height, l.width
        )));
    }
    let mut planner = FftPlanner::new();
    let mut acc = vec![0.0; k * k];
    for m in set.globally_normalized_maps() {
        let grid = fft_with(&mut planner, &m, k);
        for (a, z) in acc.iter_mut().zip(&grid.values) {
            *a += z.norm_sqr();
        }
    }
    let n = set.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Ok(SpectralGrid { k, values: acc })
}

/// p̂(k) = δn̂(k) − mean_k' δn̂(k').
pub fn shift_invariant_features(spectrum: &SpectralGrid) -> SpectralGrid {
    let mean = spectrum.sum() / spectrum.values.len() as f64;
    SpectralGrid {
        k: spectrum.k,
        values: spectrum.values.iter().map(|v| v - mean).collect(),
    }
}

/// Shift-invariant spectral feature vector of every set, row-major per set.
pub fn dataset_features(sets: &[SnapshotSet], k: usize) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    sets.par_iter()
        .map(|s| Ok(shift_invariant_features(&mean_power_spectrum(s, k)?).into_values()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ParameterPoint, Snapshot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(n: usize, seed: u64) -> RealMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealMap::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn naive_dft(map: &RealMap, k: usize) -> Vec<Complex64> {
        let mut out = Vec::new();
        for a in 0..k {
            for b in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..map.rows() {
                    for c in 0..map.cols() {
                        let phase = -(wavenumber(a, k) * r as f64 + wavenumber(b, k) * c as f64);
                        acc += Complex64::from_polar(map[(r, c)], phase);
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    #[test]
    fn delta_transform_is_flat() {
        let mut m = RealMap::zeros(3, 3);
        m[(0, 0)] = 1.0;
        let f = dft2(&m, 4).unwrap();
        assert!(f.values().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn constant_map_only_has_zero_mode() {
        let c = 0.7;
        let m = RealMap::filled(5, 5, c);
        let f = dft2(&m, 5).unwrap();
        assert!((f.get(0, 0).re - c * 25.0).abs() < 1e-12);
        for a in 0..5 {
            for b in 0..5 {
                if (a, b) != (0, 0) {
                    assert!(f.get(a, b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn plancherel_and_agreement_with_naive_sum() {
        for seed in 0..5 {
            let m = random_map(5, seed);
            let k = 7;
            let direct = dft2(&m, k).unwrap();
            let fft = dft2_fft(&m, k).unwrap();
            let naive = naive_dft(&m, k);
            for ((a, b), c) in direct.values().iter().zip(fft.values()).zip(&naive) {
                assert!((a - c).norm() < 1e-10);
                assert!((b - c).norm() < 1e-10);
            }
            let lhs: f64 = direct.values().iter().map(|z| z.norm_sqr()).sum();
            let rhs = (k * k) as f64 * m.as_slice().iter().map(|v| v * v).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        }
    }

    #[test]
    fn resolution_below_map_size_is_rejected() {
        assert!(dft2(&RealMap::zeros(5, 5), 4).is_err());
        assert!(dft2_fft(&RealMap::zeros(3, 5), 4).is_err());
    }

    fn checkerboard(n: usize) -> Snapshot {
        let bits = (0..n * n).map(|i| (((i / n) + (i % n)) % 2 == 0) as u8).collect();
        Snapshot::new(crate::data::Lattice::square(n).unwrap(), bits).unwrap()
    }

    #[test]
    fn checkerboard_power_spectrum_peaks_at_pi_pi() {
        let set = SnapshotSet::new(ParameterPoint::new(0.0, 0.0).unwrap(), vec![checkerboard(4); 250])
            .unwrap();
        let p = mean_power_spectrum(&set, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expect = if (a, b) == (2, 2) { 64.0 } else { 0.0 };
                assert!((p.get(a, b) - expect).abs() < 1e-10, "({a},{b}) = {}", p.get(a, b));
            }
        }
    }

    #[test]
    fn identical_sets_match_single_pattern() {
        let s = Snapshot::from_rows(&[&[1, 0, 0], &[0, 1, 1], &[0, 0, 0]]).unwrap();
        let set = SnapshotSet::new(ParameterPoint::new(0.0, 0.0).unwrap(), vec![s.clone(); 3]).unwrap();
        let nbar = crate::data::mean_density(&set).unwrap();
        let single = dft2(&crate::data::normalize_global(&s, nbar).unwrap(), 4).unwrap().power();
        let mean = mean_power_spectrum(&set, 4).unwrap();
        for (a, b) in single.values().iter().zip(mean.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zeros = Snapshot::from_rows(&[&[0, 0], &[0, 0]]).unwrap();
        let zset = SnapshotSet::new(ParameterPoint::new(0.0, 0.0).unwrap(), vec![zeros; 4]).unwrap();
        assert!(mean_power_spectrum(&zset, 2).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shift_invariant_feature_examples() {
        let flat = SpectralGrid::new(3, vec![2.5; 9]).unwrap();
        assert!(shift_invariant_features(&flat).values().iter().all(|v| v.abs() < 1e-15));

        let mut v = vec![0.0; 16];
        v[5] = 3.0;
        let p = shift_invariant_features(&SpectralGrid::new(4, v).unwrap());
        assert!((p.values()[5] - 3.0 * (1.0 - 1.0 / 16.0)).abs() < 1e-15);
        assert!((p.values()[0] + 3.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let g = SpectralGrid::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(3), Some("1,0,3"));
    }

    proptest::proptest! {
        #[test]
        fn features_sum_to_zero_and_ignore_constant_shifts(
            vals in proptest::collection::vec(0.0f64..100.0, 25),
            shift in -50.0f64..50.0,
        ) {
            let g = SpectralGrid::new(5, vals.clone()).unwrap();
            let p = shift_invariant_features(&g);
            let max = p.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            proptest::prop_assert!(p.sum().abs() <= 1e-9 * max);
            let shifted = SpectralGrid::new(5, vals.iter().map(|v| v + shift).collect()).unwrap();
            let q = shift_invariant_features(&shifted);
            let scale = shifted.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in p.values().iter().zip(q.values()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }
}
