//! Reading trained models and snapshot sets: Fourier order-parameter maps,
//! confidence maps, phase diagrams and connected correlators.

use serde::{Deserialize, Serialize};

use crate::ccnn::{sigmoid, CcnnModel, WeightMode};
use crate::d4::{symmetrize_k_sum, D4};
use crate::data::{Dataset, GridIndex, Lattice, ParameterPoint, RealMap, SnapshotSet};
use crate::error::{Error, Result};
use crate::spectral::{dft2, SpectralGrid};

/// `|f̂(k)|² − mean_k |f̂|²` on a `K × K` grid. Any filter shape with both
/// sides at most `K`.
pub fn normalized_filter_spectrum(filter: &RealMap, k: usize) -> Result<RealMap> {
    let power = dft2(filter, k)?.power();
    let mean = power.sum() / (k * k) as f64;
    Ok(RealMap::from_vec(k, k, power.values().iter().map(|v| v - mean).collect())?)
}

/// k-space weights `f̃^sym(k)` and the effective bias of a second-order,
/// uniform-weight model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierOpMap {
    pub weights: SpectralGrid,
    /// `ε` with the BatchNorm shift folded in.
    pub bias: f64,
}

impl FourierOpMap {
    pub fn k(&self) -> usize {
        self.weights.k()
    }
}

/// Rewrites the model as `O = σ(Σ_k f̃^sym(k)·|δn̂(k)|² − ε')`.
///
/// Eval-mode BatchNorm is folded in: `β → β/s` and `ε → ε + Σ β·μ/s` with
/// `s = √(running_var + eps)`. The grid must hold the full correlation,
/// `K ≥ L + F − 1`, for the identity to be exact.
pub fn fourier_order_parameter(model: &CcnnModel, k: usize) -> Result<FourierOpMap> {
    let cfg = model.config();
    if cfg.order != 2 || cfg.weight_mode != WeightMode::Uniform {
        return Err(Error::invalid("Fourier maps need a second-order, uniform-weight model"));
    }
    if k < cfg.map_size() {
        return Err(Error::invalid(format!(
            "K = {k} is smaller than the correlation size {}",
            cfg.map_size()
        )));
    }
    let bn = &model.batchnorm;
    let mut combined = RealMap::zeros(k, k);
    let mut bias = model.head.bias;
    for alpha in 0..cfg.n_filters {
        let j = cfg.feature_index(alpha, 2);
        let s = bn.scale(j);
        let beta = model.head.beta[j] / s;
        bias += beta * bn.running_mean[j];
        let mut f = normalized_filter_spectrum(&model.filters().effective(alpha), k)?;
        f.scale(beta);
        combined.add_assign(&f)?;
    }
    let mut sym = symmetrize_k_sum(&combined);
    sym.scale(1.0 / (k * k) as f64);
    Ok(FourierOpMap {
        weights: SpectralGrid::from_map(&sym)?,
        bias,
    })
}

/// `σ(Σ_k f̃^sym(k)·|δn̂(k)|² − ε')`.
pub fn order_parameter_value(map: &FourierOpMap, fluctuation: &RealMap) -> Result<f64> {
    let power = dft2(fluctuation, map.k())?.power();
    let s: f64 = map.weights.values().iter().zip(power.values()).map(|(w, p)| w * p).sum();
    Ok(sigmoid(s - map.bias))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMap {
    pub points: Vec<ParameterPoint>,
    pub grid: Option<Vec<GridIndex>>,
    pub values: Vec<f64>,
}

/// Per set: average the pooled features over all snapshots, then apply
/// eval-mode BatchNorm and the head once.
pub fn confidence_map(model: &CcnnModel, dataset: &Dataset) -> Result<ConfidenceMap> {
    let mut values = Vec::with_capacity(dataset.len());
    for set in dataset.sets() {
        let maps = set.fluctuation_maps();
        let mut mean = vec![0.0; model.config().n_features()];
        for m in &maps {
            for (a, b) in mean.iter_mut().zip(model.pooled_features(m)?) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|v| *v /= maps.len() as f64);
        values.push(model.predict_from_features(&mean)?);
    }
    Ok(ConfidenceMap {
        points: dataset.sets().iter().map(SnapshotSet::point).collect(),
        grid: dataset.grid().map(<[GridIndex]>::to_vec),
        values,
    })
}

pub const DEFAULT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub points: Vec<ParameterPoint>,
    pub threshold: f64,
    /// Phases with `ŷ ≥ threshold` at each point; empty means unassigned.
    pub labels: Vec<Vec<String>>,
}

pub fn phase_diagram(maps: &[(String, ConfidenceMap)], threshold: f64) -> Result<PhaseDiagram> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    let (_, first) = maps.first().ok_or(Error::Empty("confidence maps"))?;
    for (name, m) in maps {
        if m.points != first.points || m.values.len() != first.points.len() {
            return Err(Error::invalid(format!("confidence map '{name}' is on a different grid")));
        }
    }
    let labels = (0..first.points.len())
        .map(|i| {
            maps.iter()
                .filter(|(_, m)| m.values[i] >= threshold)
                .map(|(n, _)| n.clone())
                .collect()
        })
        .collect();
    Ok(PhaseDiagram {
        points: first.points.clone(),
        threshold,
        labels,
    })
}

/// Outermost one-site ring.
pub fn edge_mask(lattice: Lattice) -> Vec<bool> {
    let (h, w) = (lattice.height, lattice.width);
    (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            r == 0 || c == 0 || r == h - 1 || c == w - 1
        })
        .collect()
}

/// Every site except the outermost two-site strips.
pub fn bulk_mask(lattice: Lattice) -> Vec<bool> {
    let (h, w) = (lattice.height, lattice.width);
    (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            r >= 2 && c >= 2 && r + 2 < h && c + 2 < w
        })
        .collect()
}

fn shifted(lattice: Lattice, (r, c): (usize, usize), (dr, dc): (i64, i64)) -> Option<usize> {
    let r2 = r as i64 + dr;
    let c2 = c as i64 + dc;
    if r2 < 0 || c2 < 0 || r2 >= lattice.height as i64 || c2 >= lattice.width as i64 {
        None
    } else {
        Some(r2 as usize * lattice.width + c2 as usize)
    }
}

/// `⟨δn(x)·δn(x+d)⟩` over snapshots and pairs inside `mask`, averaged over
/// the D4 images of `d`. Images without any pair are skipped.
pub fn connected_two_point(set: &SnapshotSet, d: (i64, i64), mask: &[bool]) -> Result<f64> {
    let lattice = set.lattice();
    if mask.len() != lattice.sites() {
        return Err(Error::shape(lattice.sites(), mask.len()));
    }
    let maps = set.fluctuation_maps();
    let mut per_image = Vec::new();
    for g in D4::ALL {
        let dg = g.apply_vec(d);
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..lattice.sites() {
            if !mask[i] {
                continue;
            }
            let Some(j) = shifted(lattice, (i / lattice.width, i % lattice.width), dg) else { continue };
            if !mask[j] {
                continue;
            }
            for m in &maps {
                sum += m.as_slice()[i] * m.as_slice()[j];
            }
            count += maps.len();
        }
        if count > 0 {
            per_image.push(sum / count as f64);
        }
    }
    if per_image.is_empty() {
        return Err(Error::invalid(format!("no site pairs at displacement {d:?} inside the mask")));
    }
    Ok(per_image.iter().sum::<f64>() / per_image.len() as f64)
}

/// Every term `δn_{x+i}·δn_{x+j}·δn_{x+k}` of the three-point average.
fn three_point_terms(set: &SnapshotSet, offsets: [(i64, i64); 3], mut visit: impl FnMut([f64; 3])) -> Result<usize> {
    let [a, b, c] = offsets;
    if a == b || b == c || a == c {
        return Err(Error::invalid("three-point offsets must be distinct"));
    }
    let lattice = set.lattice();
    let maps = set.fluctuation_maps();
    let mut count = 0;
    for g in D4::ALL {
        let o = offsets.map(|v| g.apply_vec(v));
        for r in 0..lattice.height {
            for col in 0..lattice.width {
                let idx = o.map(|v| shifted(lattice, (r, col), v));
                let [Some(i), Some(j), Some(k)] = idx else { continue };
                for m in &maps {
                    let s = m.as_slice();
                    visit([s[i], s[j], s[k]]);
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("no translation keeps all three sites in the lattice"));
    }
    Ok(count)
}

/// Mean over snapshots, in-lattice translations and the eight transformed
/// offset triples of `δn_{x+i}·δn_{x+j}·δn_{x+k}`.
pub fn three_point_correlator(set: &SnapshotSet, offsets: [(i64, i64); 3]) -> Result<f64> {
    let mut sum = 0.0;
    let n = three_point_terms(set, offsets, |v| sum += v[0] * v[1] * v[2])?;
    Ok(sum / n as f64)
}

/// Contributions of each sign pattern of `(δn_i, δn_j, δn_k)` to the
/// three-point correlator, normalized by the total number of terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignDecomposition {
    /// Magnitude of the `(+++)` class.
    pub ppp: f64,
    /// Magnitude of the `(++−)` classes, averaged over the 3 placements
    /// of the minus sign.
    pub ppm_avg: f64,
    /// Magnitude of the `(+−−)` classes, averaged likewise.
    pub pmm_avg: f64,
    pub mmm: f64,
    /// Signed class sums in the order `(+++), (++−), (+−−), (−−−)`.
    pub signed: [f64; 4],
    pub total: f64,
}

impl SignDecomposition {
    /// `(+++) − 3·(++−) + 3·(+−−) − (−−−)`.
    pub fn recombined(&self) -> f64 {
        self.ppp - 3.0 * self.ppm_avg + 3.0 * self.pmm_avg - self.mmm
    }
}

/// Terms with a zero factor belong to no class.
pub fn sign_decomposition(set: &SnapshotSet, offsets: [(i64, i64); 3]) -> Result<SignDecomposition> {
    let mut signed = [0.0; 4];
    let mut total = 0.0;
    let n = three_point_terms(set, offsets, |v| {
        let p = v[0] * v[1] * v[2];
        total += p;
        if v.iter().any(|&x| x == 0.0) {
            return;
        }
        let negatives = v.iter().filter(|&&x| x < 0.0).count();
        signed[negatives] += p;
    })? as f64;
    let signed = signed.map(|s| s / n);
    Ok(SignDecomposition {
        ppp: signed[0].abs(),
        ppm_avg: signed[1].abs() / 3.0,
        pmm_avg: signed[2].abs() / 3.0,
        mmm: signed[3].abs(),
        signed,
        total: total / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Snapshot;

    fn point() -> ParameterPoint {
        ParameterPoint::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn delta_filter_has_flat_spectrum() {
        let mut f = RealMap::zeros(3, 3);
        f[(1, 1)] = 2.0;
        let s = normalized_filter_spectrum(&f, 8).unwrap();
        assert!(s.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pair_filter_spectrum_is_a_cosine() {
        let f = RealMap::filled(2, 1, 1.0);
        let k = 16;
        let s = normalized_filter_spectrum(&f, k).unwrap();
        for a in 0..k {
            for b in 0..k {
                let kx = 2.0 * std::f64::consts::PI * a as f64 / k as f64;
                assert!((s[(a, b)] - 2.0 * kx.cos()).abs() < 1e-12);
            }
        }
        let sym = symmetrize_k_sum(&s);
        for a in 0..k {
            for b in 0..k {
                let kx = 2.0 * std::f64::consts::PI * a as f64 / k as f64;
                let ky = 2.0 * std::f64::consts::PI * b as f64 / k as f64;
                assert!((sym[(a, b)] - 8.0 * (kx.cos() + ky.cos())).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn masks() {
        let l = Lattice::square(5).unwrap();
        assert_eq!(edge_mask(l).iter().filter(|&&b| b).count(), 16);
        assert_eq!(bulk_mask(l).iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn anticorrelated_pair() {
        let l = Lattice::new(1, 2).unwrap();
        let snaps = (0..10)
            .map(|i| Snapshot::new(l, if i % 2 == 0 { vec![1, 0] } else { vec![0, 1] }).unwrap())
            .collect();
        let set = SnapshotSet::new(point(), snaps).unwrap();
        let v = connected_two_point(&set, (0, 1), &[true, true]).unwrap();
        assert!((v + 0.25).abs() < 1e-15);
        assert!(connected_two_point(&set, (3, 3), &[true, true]).is_err());
    }

    #[test]
    fn three_of_four_joint_occupancy() {
        let l = Lattice::new(1, 3).unwrap();
        let snaps = [1, 1, 1, 0]
            .iter()
            .map(|&b| Snapshot::new(l, vec![b; 3]).unwrap())
            .collect();
        let set = SnapshotSet::new(point(), snaps).unwrap();
        let offs = [(0, 0), (0, 1), (0, 2)];
        let v = three_point_correlator(&set, offs).unwrap();
        assert!((v + 0.09375).abs() < 1e-15);
        let d = sign_decomposition(&set, offs).unwrap();
        assert!((d.recombined() - v).abs() < 1e-15);
        assert!(three_point_correlator(&set, [(0, 0), (0, 0), (0, 1)]).is_err());
    }

    #[test]
    fn all_positive_terms_fill_one_class() {
        // δn = +0.5 at x and both neighbours only in the "up" snapshot
        let l = Lattice::new(1, 3).unwrap();
        let snaps = vec![Snapshot::new(l, vec![1, 1, 1]).unwrap(), Snapshot::new(l, vec![0, 0, 0]).unwrap()];
        let set = SnapshotSet::new(point(), snaps).unwrap();
        let d = sign_decomposition(&set, [(0, 0), (0, 1), (0, 2)]).unwrap();
        assert!((d.ppp - 0.0625).abs() < 1e-15 && (d.mmm - 0.0625).abs() < 1e-15);
        assert_eq!((d.ppm_avg, d.pmm_avg), (0.0, 0.0));
        assert!(d.total.abs() < 1e-15);
    }

    #[test]
    fn phase_diagram_set_logic() {
        let pts = vec![point(), ParameterPoint::new(2.0, 1.0).unwrap(), ParameterPoint::new(3.0, 1.0).unwrap()];
        let a = ConfidenceMap { points: pts.clone(), grid: None, values: vec![0.9, 0.2, 0.1] };
        let b = ConfidenceMap { points: pts.clone(), grid: None, values: vec![0.1, 0.8, 0.3] };
        let d = phase_diagram(&[("a".into(), a.clone()), ("b".into(), b)], 0.75).unwrap();
        assert_eq!(d.labels, vec![vec!["a".to_string()], vec!["b".to_string()], vec![]]);
        let single = phase_diagram(&[("a".into(), ConfidenceMap { values: vec![0.9; 3], ..a.clone() })], 0.75).unwrap();
        assert!(single.labels.iter().all(|l| l == &vec!["a".to_string()]));
        let other = ConfidenceMap { points: pts[..2].to_vec(), grid: None, values: vec![0.5, 0.5] };
        assert!(phase_diagram(&[("a".into(), a), ("c".into(), other)], 0.75).is_err());
    }
}
