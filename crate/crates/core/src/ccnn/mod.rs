//! Correlator convolutional networks.
//!
//! A model holds `n_filters` nonnegative filters. Each filter produces
//! correlator maps `C^(m)` for `m = 2..=order`, symmetrized over D4,
//! pooled against a spatial weight `w(x)`, normalized by BatchNorm and
//! combined by a logistic head.

mod batchnorm;
mod checkpoint;
mod maps;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use batchnorm::{batchnorm_apply, BatchNormState, BatchStats, Mode, BN_EPS, BN_MOMENTUM};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use maps::{conv_full, correlator_maps, d4_symmetrized_maps, spatial_pool};

use crate::d4::{symmetrize, D4};
use crate::data::RealMap;
use crate::error::{Error, Result};
use crate::rng;
use maps::{conv_full_into, filter_grad_into};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Uniform,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcnnConfig {
    /// Side length of the (square) input lattice.
    pub lattice: usize,
    /// Highest correlator order, 2 or 3.
    pub order: usize,
    pub n_filters: usize,
    pub filter_size: usize,
    pub weight_mode: WeightMode,
    pub nonneg_beta: bool,
}

impl Default for CcnnConfig {
    fn default() -> Self {
        Self {
            lattice: 13,
            order: 3,
            n_filters: 3,
            filter_size: 3,
            weight_mode: WeightMode::Learned,
            nonneg_beta: false,
        }
    }
}

impl CcnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.order) {
            return Err(Error::invalid(format!(
                "model order must be 2 or 3, got {}",
                self.order
            )));
        }
        if self.n_filters == 0 || self.filter_size == 0 || self.lattice == 0 {
            return Err(Error::invalid("lattice, filter count and filter size must be positive"));
        }
        Ok(())
    }

    /// Side of the correlator maps, `L + F − 1`.
    pub fn map_size(&self) -> usize {
        self.lattice + self.filter_size - 1
    }

    /// Number of pooled features feeding the head.
    pub fn n_features(&self) -> usize {
        self.n_filters * (self.order - 1)
    }

    /// Head index of the order-`m` feature of filter `alpha`.
    pub fn feature_index(&self, alpha: usize, m: usize) -> usize {
        alpha * (self.order - 1) + (m - 2)
    }
}

/// Raw filter parameters; the effective filter is `|raw|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    raw: Vec<RealMap>,
}

impl FilterBank {
    pub fn new(raw: Vec<RealMap>) -> Result<Self> {
        let first = raw.first().ok_or(Error::Empty("filter bank"))?;
        let (f, g) = first.shape();
        if f != g {
            return Err(Error::invalid("filters must be square"));
        }
        for r in &raw {
            if r.shape() != (f, f) {
                return Err(Error::shape(format!("{f}x{f}"), format!("{}x{}", r.rows(), r.cols())));
            }
        }
        Ok(Self { raw })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn size(&self) -> usize {
        self.raw[0].rows()
    }

    pub fn raw(&self) -> &[RealMap] {
        &self.raw
    }

    pub fn effective(&self, alpha: usize) -> RealMap {
        self.raw[alpha].map(f64::abs)
    }

    /// Σ_α Σ_a |raw|.
    pub fn l1(&self) -> f64 {
        self.raw.iter().flat_map(|r| r.as_slice()).map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeight {
    mode: WeightMode,
    raw: RealMap,
}

impl SpatialWeight {
    pub fn uniform(size: usize) -> Self {
        Self {
            mode: WeightMode::Uniform,
            raw: RealMap::filled(size, size, 1.0),
        }
    }

    pub fn learned(raw: RealMap) -> Result<Self> {
        if raw.rows() != raw.cols() {
            return Err(Error::invalid("spatial weight must be square"));
        }
        Ok(Self {
            mode: WeightMode::Learned,
            raw,
        })
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn raw(&self) -> &RealMap {
        &self.raw
    }

    /// Group average of the raw map; all ones in uniform mode.
    pub fn effective(&self) -> RealMap {
        match self.mode {
            WeightMode::Uniform => RealMap::filled(self.raw.rows(), self.raw.cols(), 1.0),
            WeightMode::Learned => symmetrize(&self.raw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    /// `β_α^(m)`, indexed by [`CcnnConfig::feature_index`].
    pub beta: Vec<f64>,
    /// `ε` in `σ(Σ β·c − ε)`.
    pub bias: f64,
}

impl LogisticHead {
    pub fn logit(&self, normalized: &[f64]) -> f64 {
        self.beta.iter().zip(normalized).map(|(b, c)| b * c).sum::<f64>() - self.bias
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient of the loss with respect to every raw parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub filters: Vec<RealMap>,
    /// `None` in uniform mode.
    pub spatial: Option<RealMap>,
    pub beta: Vec<f64>,
    pub bias: f64,
}

impl Gradients {
    /// Same layout as [`CcnnModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.filters.iter().flat_map(|f| f.as_slice().iter().copied()).collect();
        if let Some(s) = &self.spatial {
            out.extend_from_slice(s.as_slice());
        }
        out.extend_from_slice(&self.beta);
        out.push(self.bias);
        out
    }
}

/// Loss, gradients and the batch statistics BatchNorm used.
#[derive(Debug, Clone)]
pub struct LossAndGradients {
    pub loss: f64,
    pub predictions: Vec<f64>,
    pub gradients: Gradients,
    pub stats: BatchStats,
}

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CcnnModel {
    config: CcnnConfig,
    filters: FilterBank,
    weight: SpatialWeight,
    pub head: LogisticHead,
    pub batchnorm: BatchNormState,
}

/// Per-batch constants shared by every snapshot.
struct Prepared {
    f1: Vec<Vec<f64>>,
    f2: Vec<Vec<f64>>,
    f3: Vec<Vec<f64>>,
    w: RealMap,
}

impl CcnnModel {
    pub fn new(
        config: CcnnConfig,
        filters: FilterBank,
        weight: SpatialWeight,
        head: LogisticHead,
        batchnorm: BatchNormState,
    ) -> Result<Self> {
        config.validate()?;
        if filters.len() != config.n_filters || filters.size() != config.filter_size {
            return Err(Error::shape(
                format!("{} filters of size {}", config.n_filters, config.filter_size),
                format!("{} filters of size {}", filters.len(), filters.size()),
            ));
        }
        let m = config.map_size();
        if weight.raw().shape() != (m, m) {
            return Err(Error::shape(format!("{m}x{m} spatial weight"), format!("{:?}", weight.raw().shape())));
        }
        if weight.mode() != config.weight_mode {
            return Err(Error::invalid("spatial weight mode disagrees with the config"));
        }
        let j = config.n_features();
        if head.beta.len() != j {
            return Err(Error::shape(j, head.beta.len()));
        }
        if config.nonneg_beta && head.beta.iter().any(|&b| b < 0.0) {
            return Err(Error::invalid("nonneg_beta model has a negative coefficient"));
        }
        if batchnorm.running_mean.len() != j || batchnorm.running_var.len() != j {
            return Err(Error::shape(j, batchnorm.running_mean.len()));
        }
        Ok(Self {
            config,
            filters,
            weight,
            head,
            batchnorm,
        })
    }

    /// Random initialization: raw filters ~ U(−1/F, 1/F), raw w ~
    /// U(−0.1, 0.1) (ones when uniform), β ~ U(−0.1, 0.1) (U(0, 0.1) when
    /// constrained), ε = 0.
    pub fn init(config: CcnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, 0);
        let f = config.filter_size;
        let k = 1.0 / f as f64;
        let filters = (0..config.n_filters)
            .map(|_| RealMap::from_fn(f, f, |_, _| rng.gen_range(-k..k)))
            .collect();
        let m = config.map_size();
        let weight = match config.weight_mode {
            WeightMode::Uniform => SpatialWeight::uniform(m),
            WeightMode::Learned => SpatialWeight::learned(RealMap::from_fn(m, m, |_, _| rng.gen_range(-0.1..0.1)))?,
        };
        let beta = (0..config.n_features())
            .map(|_| {
                if config.nonneg_beta {
                    rng.gen_range(0.0..0.1)
                } else {
                    rng.gen_range(-0.1..0.1)
                }
            })
            .collect();
        Self::new(
            config,
            FilterBank::new(filters)?,
            weight,
            LogisticHead { beta, bias: 0.0 },
            BatchNormState::new(config.n_features()),
        )
    }

    pub fn config(&self) -> &CcnnConfig {
        &self.config
    }

    pub fn filters(&self) -> &FilterBank {
        &self.filters
    }

    pub fn weight(&self) -> &SpatialWeight {
        &self.weight
    }

    fn prepare(&self) -> Prepared {
        let f1: Vec<Vec<f64>> = (0..self.config.n_filters)
            .map(|a| self.filters.effective(a).into_vec())
            .collect();
        let f2 = f1.iter().map(|f| f.iter().map(|v| v * v).collect()).collect();
        let f3 = f1.iter().map(|f| f.iter().map(|v| v * v * v).collect()).collect();
        Prepared {
            f1,
            f2,
            f3,
            w: self.weight.effective(),
        }
    }

    fn check_input(&self, map: &RealMap) -> Result<()> {
        let l = self.config.lattice;
        if map.shape() != (l, l) {
            return Err(Error::shape(format!("{l}x{l}"), format!("{}x{}", map.rows(), map.cols())));
        }
        Ok(())
    }

    /// Shared forward/backward kernel for one snapshot. With `upstream`
    /// set, accumulates filter gradients (w.r.t. effective filters) and
    /// the spatial-weight gradient (w.r.t. effective w).
    fn snapshot_pass(
        &self,
        p: &Prepared,
        input: &RealMap,
        upstream: Option<&[f64]>,
        dfilters: &mut [Vec<f64>],
        dw: &mut [f64],
    ) -> Vec<f64> {
        let cfg = &self.config;
        let l = cfg.lattice;
        let f = cfg.filter_size;
        let m = cfg.map_size();
        let order = cfg.order;
        let w = p.w.as_slice();
        let mut feats = vec![0.0; cfg.n_features()];
        let mut c1 = vec![0.0; m * m];
        let mut s2 = vec![0.0; m * m];
        let mut s3 = vec![0.0; m * m];
        let mut d1 = vec![0.0; m * m];
        let mut d2 = vec![0.0; m * m];
        let mut d3 = vec![0.0; m * m];
        for g in D4::ALL {
            let u = g.act(input).into_vec();
            let u2: Vec<f64> = u.iter().map(|v| v * v).collect();
            let u3: Vec<f64> = if order == 3 { u.iter().map(|v| v * v * v).collect() } else { Vec::new() };
            for alpha in 0..cfg.n_filters {
                c1.iter_mut().for_each(|v| *v = 0.0);
                s2.iter_mut().for_each(|v| *v = 0.0);
                conv_full_into(&u, l, l, &p.f1[alpha], f, f, &mut c1);
                conv_full_into(&u2, l, l, &p.f2[alpha], f, f, &mut s2);
                if order == 3 {
                    s3.iter_mut().for_each(|v| *v = 0.0);
                    conv_full_into(&u3, l, l, &p.f3[alpha], f, f, &mut s3);
                }
                let j2 = cfg.feature_index(alpha, 2);
                let mut acc2 = 0.0;
                let mut acc3 = 0.0;
                for x in 0..m * m {
                    let a = c1[x];
                    let k2 = a * a - s2[x];
                    acc2 += w[x] * k2;
                    if order == 3 {
                        acc3 += w[x] * (a * a * a - 3.0 * a * s2[x] + 2.0 * s3[x]);
                    }
                }
                feats[j2] += acc2;
                if order == 3 {
                    feats[j2 + 1] += acc3;
                }
                let Some(up) = upstream else { continue };
                let g2 = up[j2];
                let g3 = if order == 3 { up[j2 + 1] } else { 0.0 };
                for x in 0..m * m {
                    let a = c1[x];
                    let k2 = a * a - s2[x];
                    let gw2 = g2 * w[x];
                    let gw3 = g3 * w[x];
                    let mut dwx = g2 * k2;
                    d1[x] = 2.0 * gw2 * a;
                    d2[x] = -gw2;
                    if order == 3 {
                        let k3 = a * a * a - 3.0 * a * s2[x] + 2.0 * s3[x];
                        dwx += g3 * k3;
                        d1[x] += gw3 * 3.0 * (a * a - s2[x]);
                        d2[x] -= 3.0 * a * gw3;
                        d3[x] = 2.0 * gw3;
                    }
                    dw[x] += dwx;
                }
                let fa = &p.f1[alpha];
                let grad = &mut dfilters[alpha];
                filter_grad_into(&u, l, l, &d1, f, f, |_| 1.0, grad);
                filter_grad_into(&u2, l, l, &d2, f, f, |i| 2.0 * fa[i], grad);
                if order == 3 {
                    filter_grad_into(&u3, l, l, &d3, f, f, |i| 3.0 * fa[i] * fa[i], grad);
                }
            }
        }
        feats
    }

    /// Pooled features `c_α^(m)` of one fluctuation map, before BatchNorm.
    pub fn pooled_features(&self, input: &RealMap) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let p = self.prepare();
        let feats = self.snapshot_pass(&p, input, None, &mut [], &mut []);
        if feats.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pooled correlator features".into()));
        }
        Ok(feats)
    }

    fn batch_features(&self, batch: &[RealMap]) -> Result<Vec<Vec<f64>>> {
        for b in batch {
            self.check_input(b)?;
        }
        let p = self.prepare();
        let feats: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|x| self.snapshot_pass(&p, x, None, &mut [], &mut []))
            .collect();
        if feats.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pooled correlator features".into()));
        }
        Ok(feats)
    }

    /// Eval-mode BatchNorm and the head applied to one feature vector.
    pub fn predict_from_features(&self, features: &[f64]) -> Result<f64> {
        let normalized = self.batchnorm.normalize_eval(features)?;
        Ok(sigmoid(self.head.logit(&normalized)))
    }

    /// `ŷ` for each map. Train mode normalizes with batch statistics and
    /// updates the running statistics; eval mode uses the running ones.
    pub fn forward(&mut self, batch: &[RealMap], mode: Mode) -> Result<Vec<f64>> {
        let feats = self.batch_features(batch)?;
        let normalized = batchnorm_apply(&feats, &mut self.batchnorm, mode)?;
        Ok(normalized.iter().map(|c| sigmoid(self.head.logit(c))).collect())
    }

    /// Eval-mode predictions without touching any state.
    pub fn predict(&self, batch: &[RealMap]) -> Result<Vec<f64>> {
        let feats = self.batch_features(batch)?;
        feats.iter().map(|c| self.predict_from_features(c)).collect()
    }

    /// Mean cross-entropy (with `ŷ` clamped to `[1e−12, 1−1e−12]`) plus
    /// `γ Σ|f|`, and its exact gradient, with BatchNorm in train mode.
    /// Running statistics are left untouched; apply `stats` with
    /// [`BatchNormState::update`].
    pub fn loss_and_gradients(&self, batch: &[RealMap], labels: &[f64], gamma: f64) -> Result<LossAndGradients> {
        if batch.len() != labels.len() {
            return Err(Error::shape(batch.len(), labels.len()));
        }
        let feats = self.batch_features(batch)?;
        let mut stats = BatchStats::of(&feats)?;
        stats.eps = self.batchnorm.eps;
        let xhat = stats.normalize(&feats);
        let n = batch.len() as f64;
        let jn = self.config.n_features();

        let mut loss = 0.0;
        let mut predictions = Vec::with_capacity(batch.len());
        let mut dz = Vec::with_capacity(batch.len());
        for (x, &y) in xhat.iter().zip(labels) {
            let yhat = sigmoid(self.head.logit(x));
            let p = yhat.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            predictions.push(yhat);
            dz.push((yhat - y) / n);
        }
        loss = loss / n + gamma * self.filters.l1();

        let mut dbeta = vec![0.0; jn];
        let mut dbias = 0.0;
        for (x, &d) in xhat.iter().zip(&dz) {
            for (db, xv) in dbeta.iter_mut().zip(x) {
                *db += d * xv;
            }
            dbias -= d;
        }
        let dxhat: Vec<Vec<f64>> = dz.iter().map(|&d| self.head.beta.iter().map(|b| d * b).collect()).collect();
        let dfeat = stats.backward(&xhat, &dxhat);

        let p = self.prepare();
        let f = self.config.filter_size;
        let m = self.config.map_size();
        let partials: Vec<(Vec<Vec<f64>>, Vec<f64>)> = batch
            .par_iter()
            .zip(dfeat.par_iter())
            .map(|(x, up)| {
                let mut df = vec![vec![0.0; f * f]; self.config.n_filters];
                let mut dw = vec![0.0; m * m];
                self.snapshot_pass(&p, x, Some(up), &mut df, &mut dw);
                (df, dw)
            })
            .collect();
        let mut df = vec![vec![0.0; f * f]; self.config.n_filters];
        let mut dw = vec![0.0; m * m];
        for (pf, pw) in &partials {
            for (a, b) in df.iter_mut().zip(pf) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
            dw.iter_mut().zip(pw).for_each(|(x, y)| *x += y);
        }

        let filters = df
            .into_iter()
            .zip(self.filters.raw())
            .map(|(g, raw)| {
                let data = g
                    .iter()
                    .zip(raw.as_slice())
                    .map(|(&gv, &r)| {
                        let s = if r > 0.0 {
                            1.0
                        } else if r < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        s * (gv + gamma)
                    })
                    .collect();
                RealMap::from_vec(f, f, data).expect("filter shape")
            })
            .collect();
        let spatial = match self.weight.mode() {
            WeightMode::Uniform => None,
            WeightMode::Learned => Some(symmetrize(&RealMap::from_vec(m, m, dw).expect("map shape"))),
        };
        let gradients = Gradients {
            filters,
            spatial,
            beta: dbeta,
            bias: dbias,
        };
        if !loss.is_finite() || gradients.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss or gradient".into()));
        }
        Ok(LossAndGradients {
            loss,
            predictions,
            gradients,
            stats,
        })
    }

    /// Flat parameter vector: raw filters, raw spatial weight (learned
    /// mode only), β, ε.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.filters.raw().iter().flat_map(|f| f.as_slice().iter().copied()).collect();
        if self.weight.mode() == WeightMode::Learned {
            out.extend_from_slice(self.weight.raw().as_slice());
        }
        out.extend_from_slice(&self.head.beta);
        out.push(self.head.bias);
        out
    }

    pub fn n_parameters(&self) -> usize {
        let f = self.config.filter_size;
        let m = self.config.map_size();
        let spatial = if self.config.weight_mode == WeightMode::Learned { m * m } else { 0 };
        self.config.n_filters * f * f + spatial + self.config.n_features() + 1
    }

    /// Index range of β inside [`parameters`](Self::parameters).
    pub fn beta_range(&self) -> std::ops::Range<usize> {
        let end = self.n_parameters() - 1;
        end - self.config.n_features()..end
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(Error::shape(self.n_parameters(), params.len()));
        }
        let f = self.config.filter_size;
        let mut rest = params;
        for raw in &mut self.filters.raw {
            raw.as_mut_slice().copy_from_slice(&rest[..f * f]);
            rest = &rest[f * f..];
        }
        if self.weight.mode() == WeightMode::Learned {
            let mm = self.weight.raw.as_slice().len();
            self.weight.raw.as_mut_slice().copy_from_slice(&rest[..mm]);
            rest = &rest[mm..];
        }
        let j = self.head.beta.len();
        self.head.beta.copy_from_slice(&rest[..j]);
        self.head.bias = rest[j];
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(l: usize, seed: u64) -> RealMap {
        let mut rng = rng::stream(seed, 99);
        RealMap::from_fn(l, l, |_, _| rng.gen_range(-0.8..0.8))
    }

    #[test]
    fn zero_head_gives_one_half() {
        let cfg = CcnnConfig {
            lattice: 5,
            ..CcnnConfig::default()
        };
        let mut model = CcnnModel::init(cfg, 1).unwrap();
        model.head.beta.iter_mut().for_each(|b| *b = 0.0);
        let y = model.predict(&[random_input(5, 1), random_input(5, 2)]).unwrap();
        assert!(y.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn sigmoid_of_ln3() {
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-30.0) > 0.0 && sigmoid(30.0) < 1.0);
    }

    #[test]
    fn parameter_round_trip() {
        let mut model = CcnnModel::init(CcnnConfig { lattice: 4, ..CcnnConfig::default() }, 3).unwrap();
        let p = model.parameters();
        assert_eq!(p.len(), model.n_parameters());
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        model.set_parameters(&shifted).unwrap();
        assert_eq!(model.parameters(), shifted);
        assert_eq!(&model.parameters()[model.beta_range()], &model.head.beta[..]);
    }

    #[test]
    fn effective_weight_is_symmetric_and_filters_nonnegative() {
        let model = CcnnModel::init(CcnnConfig { lattice: 6, filter_size: 4, ..CcnnConfig::default() }, 5).unwrap();
        assert!(crate::d4::is_symmetric(&model.weight().effective(), 0.0));
        for a in 0..model.filters().len() {
            assert!(model.filters().effective(a).as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn pooled_features_match_the_map_route() {
        let cfg = CcnnConfig { lattice: 6, ..CcnnConfig::default() };
        let model = CcnnModel::init(cfg, 7).unwrap();
        let x = random_input(6, 3);
        let feats = model.pooled_features(&x).unwrap();
        let w = model.weight().effective();
        for a in 0..cfg.n_filters {
            for m in 2..=3 {
                let map = d4_symmetrized_maps(&x, &model.filters().effective(a), m).unwrap();
                let expect = spatial_pool(&map, &w).unwrap();
                let got = feats[cfg.feature_index(a, m)];
                assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_order_one_and_bad_shapes() {
        assert!(CcnnModel::init(CcnnConfig { order: 1, ..CcnnConfig::default() }, 0).is_err());
        let model = CcnnModel::init(CcnnConfig { lattice: 5, ..CcnnConfig::default() }, 0).unwrap();
        assert!(model.predict(&[RealMap::zeros(4, 4)]).is_err());
    }

    #[test]
    fn train_forward_updates_running_stats() {
        let mut model = CcnnModel::init(CcnnConfig { lattice: 5, ..CcnnConfig::default() }, 2).unwrap();
        let batch: Vec<RealMap> = (0..4).map(|s| random_input(5, s)).collect();
        let before = model.batchnorm.clone();
        model.forward(&batch, Mode::Train).unwrap();
        assert_ne!(before, model.batchnorm);
        let after = model.batchnorm.clone();
        model.forward(&batch, Mode::Eval).unwrap();
        assert_eq!(after, model.batchnorm);
        assert!(model.forward(&batch[..1], Mode::Train).is_err());
    }
}
