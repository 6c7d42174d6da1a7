//! Supervised training of one-vs-rest CCNN classifiers.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ccnn::{CcnnConfig, CcnnModel, Gradients, WeightMode};
use crate::data::{Dataset, ParameterPoint, RealMap};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Tolerance when matching requested training points to dataset points.
pub const POINT_TOLERANCE: f64 = 0.015;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: CcnnConfig,
    pub lr0: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: CcnnConfig::default(),
            lr0: 0.01,
            batch_size: 128,
            gamma: 0.1,
            epochs: 100,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid("lr0 must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Fluctuation maps of the target phase (label 1) and of every other
/// phase (label 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub target_name: String,
    pub target: Vec<RealMap>,
    pub others: Vec<(String, Vec<RealMap>)>,
}

impl LabeledPool {
    pub fn new(target_name: impl Into<String>, target: Vec<RealMap>, others: Vec<(String, Vec<RealMap>)>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Empty("target phase pool"));
        }
        if let Some((name, _)) = others.iter().find(|(_, m)| m.is_empty()) {
            return Err(Error::invalid(format!("phase pool '{name}' is empty")));
        }
        Ok(Self {
            target_name: target_name.into(),
            target,
            others,
        })
    }

    /// Gathers per-site normalized maps of every listed training point.
    /// Points are matched to dataset sets within [`POINT_TOLERANCE`].
    pub fn from_dataset(dataset: &Dataset, points: &TrainingPoints, target: &str) -> Result<Self> {
        let mut target_maps = None;
        let mut others = Vec::new();
        for (phase, list) in points {
            let mut maps = Vec::new();
            for &(d, r) in list {
                let p = ParameterPoint::new(d, r)?;
                let i = dataset.find_point(&p, POINT_TOLERANCE).ok_or_else(|| {
                    Error::invalid(format!("training point ({d}, {r}) for '{phase}' not in the dataset"))
                })?;
                maps.extend(dataset.sets()[i].fluctuation_maps());
            }
            if phase == target {
                target_maps = Some(maps);
            } else {
                others.push((phase.clone(), maps));
            }
        }
        let target_maps = target_maps.ok_or_else(|| Error::invalid(format!("no training points for phase '{target}'")))?;
        Self::new(target, target_maps, others)
    }

    pub fn len(&self) -> usize {
        self.target.len() + self.others.iter().map(|(_, m)| m.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn groups(&self) -> Vec<&[RealMap]> {
        std::iter::once(self.target.as_slice())
            .chain(self.others.iter().map(|(_, m)| m.as_slice()))
            .collect()
    }

    fn rebuild(&self, groups: Vec<Vec<RealMap>>) -> Self {
        let mut it = groups.into_iter();
        Self {
            target_name: self.target_name.clone(),
            target: it.next().expect("target group"),
            others: self.others.iter().map(|(n, _)| n.clone()).zip(it).collect(),
        }
    }

    /// Random per-phase split; each phase keeps at least one training map.
    pub fn split(&self, val_fraction: f64, seed: u64) -> (LabeledPool, LabeledPool) {
        let mut rng = stream(seed, 1);
        let mut train = Vec::new();
        let mut val = Vec::new();
        for g in self.groups() {
            let mut idx: Vec<usize> = (0..g.len()).collect();
            idx.shuffle(&mut rng);
            let n_val = ((g.len() as f64 * val_fraction).round() as usize).min(g.len() - 1);
            val.push(idx[..n_val].iter().map(|&i| g[i].clone()).collect());
            train.push(idx[n_val..].iter().map(|&i| g[i].clone()).collect());
        }
        (self.rebuild(train), self.rebuild(val))
    }

    /// Fold `fold` of `folds` per phase as validation, the rest as training.
    pub fn fold(&self, folds: usize, fold: usize, seed: u64) -> (LabeledPool, LabeledPool) {
        let mut rng = stream(seed, 2);
        let mut train = Vec::new();
        let mut val = Vec::new();
        for g in self.groups() {
            let mut idx: Vec<usize> = (0..g.len()).collect();
            idx.shuffle(&mut rng);
            let (mut t, mut v) = (Vec::new(), Vec::new());
            for (pos, &i) in idx.iter().enumerate() {
                if pos % folds == fold {
                    v.push(g[i].clone());
                } else {
                    t.push(g[i].clone());
                }
            }
            train.push(t);
            val.push(v);
        }
        (self.rebuild(train), self.rebuild(val))
    }
}

/// Phase name → training points `(Δ/Ω, R_b/a)`.
pub type TrainingPoints = BTreeMap<String, Vec<(f64, f64)>>;

fn product(deltas: &[f64], rbs: &[f64]) -> Vec<(f64, f64)> {
    deltas.iter().flat_map(|&d| rbs.iter().map(move |&r| (d, r))).collect()
}

/// Default training points for the six phases.
pub fn default_training_points() -> TrainingPoints {
    let mut t = BTreeMap::new();
    t.insert("checkerboard".into(), product(&[3.02, 3.26], &[1.13, 1.23]));
    t.insert("striated".into(), product(&[2.33, 2.56, 2.79, 3.02], &[1.46]));
    t.insert("star".into(), product(&[3.95, 4.19, 4.42, 4.65], &[1.71]));
    t.insert("rhombic".into(), product(&[2.32, 2.56, 2.79, 3.02], &[1.97]));
    t.insert("edge_ordered".into(), product(&[0.69, 0.93], &[1.46, 1.56]));
    t.insert("disordered".into(), product(&[-2.09, -1.62, -1.16, -0.4], &[1.13, 1.46, 1.81]));
    t
}

/// Draws the target phase with probability 1/2 and each of the `k` other
/// phases with probability `1/(2k)`; uniform within the chosen phase.
pub struct BalancedSampler<'a> {
    pool: &'a LabeledPool,
}

impl<'a> BalancedSampler<'a> {
    pub fn new(pool: &'a LabeledPool) -> Result<Self> {
        if pool.target.is_empty() || pool.others.iter().any(|(_, m)| m.is_empty()) {
            return Err(Error::Empty("phase pool"));
        }
        Ok(Self { pool })
    }

    /// Phase index of one draw: 0 is the target, `i ≥ 1` is `others[i−1]`.
    pub fn draw_phase(&self, rng: &mut impl Rng) -> usize {
        let k = self.pool.others.len();
        if k == 0 || rng.gen::<f64>() < 0.5 {
            0
        } else {
            1 + rng.gen_range(0..k)
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> (&'a RealMap, f64) {
        match self.draw_phase(rng) {
            0 => (&self.pool.target[rng.gen_range(0..self.pool.target.len())], 1.0),
            i => {
                let maps = &self.pool.others[i - 1].1;
                (&maps[rng.gen_range(0..maps.len())], 0.0)
            }
        }
    }

    pub fn batch(&self, batch_size: usize, rng: &mut impl Rng) -> (Vec<RealMap>, Vec<f64>) {
        (0..batch_size).map(|_| {
            let (m, y) = self.draw(rng);
            (m.clone(), y)
        })
        .unzip()
    }
}

/// One minibatch from a seeded stream.
pub fn balanced_sampler(pool: &LabeledPool, batch_size: usize, seed: u64) -> Result<(Vec<RealMap>, Vec<f64>)> {
    let sampler = BalancedSampler::new(pool)?;
    Ok(sampler.batch(batch_size, &mut stream(seed, 0)))
}

/// `lr0·(1 + cos(πt/T))/2`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * (1.0 + (PI * t as f64 / total as f64).cos()) / 2.0
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

/// Adam on every model parameter, then projects β onto β ≥ 0 if the
/// model is constrained.
pub fn adam_step(model: &mut CcnnModel, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let mut params = model.parameters();
    let g = grads.flatten();
    if g.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(params.len(), g.len()));
    }
    adam_update(&mut params, &g, state, lr);
    if model.config().nonneg_beta {
        for p in &mut params[model.beta_range()] {
            *p = p.max(0.0);
        }
    }
    model.set_parameters(&params)
}

/// Mean cross-entropy plus the L1 penalty, BatchNorm in train mode.
pub fn loss(model: &CcnnModel, batch: &[RealMap], labels: &[f64], gamma: f64) -> Result<f64> {
    Ok(model.loss_and_gradients(batch, labels, gamma)?.loss)
}

pub fn gradients(model: &CcnnModel, batch: &[RealMap], labels: &[f64], gamma: f64) -> Result<Gradients> {
    Ok(model.loss_and_gradients(batch, labels, gamma)?.gradients)
}

/// Class-balanced accuracy at threshold 0.5: half the target accuracy
/// plus half the mean accuracy over the other phases. A pool without
/// other phases scores the target accuracy alone.
pub fn balanced_accuracy(model: &CcnnModel, pool: &LabeledPool) -> Result<f64> {
    let acc = |maps: &[RealMap], positive: bool| -> Result<f64> {
        let y = model.predict(maps)?;
        Ok(y.iter().filter(|&&v| (v >= 0.5) == positive).count() as f64 / maps.len() as f64)
    };
    if pool.target.is_empty() {
        return Err(Error::Empty("validation pool"));
    }
    let target = acc(&pool.target, true)?;
    let with_data: Vec<&(String, Vec<RealMap>)> = pool.others.iter().filter(|(_, m)| !m.is_empty()).collect();
    if with_data.is_empty() {
        return Ok(target);
    }
    let mut rest = 0.0;
    for (_, maps) in &with_data {
        rest += acc(maps, false)?;
    }
    Ok(0.5 * target + 0.5 * rest / with_data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub loss: Vec<f64>,
    /// Balanced validation accuracy after each epoch.
    pub val_accuracy: Vec<f64>,
    /// Learning rate at the first step of each epoch.
    pub learning_rate: Vec<f64>,
    pub steps_per_epoch: usize,
    pub final_val_accuracy: Option<f64>,
}

/// Trains on an explicit train/validation pair.
pub fn train_split(train_pool: &LabeledPool, val_pool: Option<&LabeledPool>, config: &TrainConfig) -> Result<(CcnnModel, TrainReport)> {
    config.validate()?;
    let mut model = CcnnModel::init(config.model, derive_seed(config.seed, 2))?;
    let sampler = BalancedSampler::new(train_pool)?;
    let mut rng = stream(config.seed, 3);
    let steps = train_pool.len().div_ceil(config.batch_size);
    let total = config.epochs * steps;
    let mut adam = AdamState::new(model.n_parameters());
    let mut report = TrainReport {
        loss: Vec::with_capacity(config.epochs),
        val_accuracy: Vec::with_capacity(config.epochs),
        learning_rate: Vec::with_capacity(config.epochs),
        steps_per_epoch: steps,
        final_val_accuracy: None,
    };
    let val_pool = val_pool.filter(|p| !p.target.is_empty());
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        report.learning_rate.push(cosine_lr(epoch * steps, total, config.lr0));
        for s in 0..steps {
            let lr = cosine_lr(epoch * steps + s, total, config.lr0);
            let (batch, labels) = sampler.batch(config.batch_size, &mut rng);
            let out = model.loss_and_gradients(&batch, &labels, config.gamma)?;
            epoch_loss += out.loss;
            adam_step(&mut model, &out.gradients, &mut adam, lr)?;
            model.batchnorm.update(&out.stats);
        }
        report.loss.push(epoch_loss / steps as f64);
        if let Some(v) = val_pool {
            report.val_accuracy.push(balanced_accuracy(&model, v)?);
        } else {
            report.val_accuracy.push(f64::NAN);
        }
    }
    report.final_val_accuracy = match val_pool {
        Some(v) => Some(balanced_accuracy(&model, v)?),
        None => None,
    };
    Ok((model, report))
}

/// Splits the pool `1 − val_fraction : val_fraction` and trains.
pub fn train(pool: &LabeledPool, config: &TrainConfig) -> Result<(CcnnModel, TrainReport)> {
    config.validate()?;
    let (t, v) = pool.split(config.val_fraction, config.seed);
    train_split(&t, Some(&v), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// One accuracy per (seed, fold), seed-major.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl CvReport {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let stderr = if accuracies.len() > 1 {
            let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self {
            accuracies,
            mean,
            stderr,
        }
    }
}

/// `folds`-fold cross-validation repeated over `seeds` seeds.
pub fn cross_validate(pool: &LabeledPool, config: &TrainConfig, folds: usize, seeds: usize) -> Result<CvReport> {
    if folds < 2 || seeds == 0 {
        return Err(Error::invalid("cross-validation needs at least 2 folds and 1 seed"));
    }
    let smallest = pool.groups().iter().map(|g| g.len()).min().unwrap_or(0);
    if smallest < folds {
        return Err(Error::invalid(format!(
            "a phase with {smallest} maps cannot be split into {folds} folds"
        )));
    }
    let mut accuracies = Vec::with_capacity(folds * seeds);
    for s in 0..seeds {
        let seed = derive_seed(config.seed, s as u64);
        for f in 0..folds {
            let (t, v) = pool.fold(folds, f, seed);
            let cfg = TrainConfig { seed: derive_seed(seed, f as u64), ..*config };
            let (model, _) = train_split(&t, None, &cfg)?;
            accuracies.push(balanced_accuracy(&model, &v)?);
        }
    }
    Ok(CvReport::from_accuracies(accuracies))
}

/// One row of an ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub order: usize,
    pub weight_mode: WeightMode,
    pub filter_size: usize,
    pub nonneg_beta: bool,
    pub gamma: f64,
}

impl Variant {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            model: CcnnConfig {
                order: self.order,
                weight_mode: self.weight_mode,
                filter_size: self.filter_size,
                nonneg_beta: self.nonneg_beta,
                ..base.model
            },
            gamma: self.gamma,
            ..*base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: CvReport,
}

pub fn ablation_suite(
    pool: &LabeledPool,
    base: &TrainConfig,
    variants: &[Variant],
    folds: usize,
    seeds: usize,
) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|v| {
            Ok(AblationRow {
                variant: *v,
                report: cross_validate(pool, &v.apply(base), folds, seeds)?,
            })
        })
        .collect()
}

/// Plain-text table, accuracies in percent with the standard error of
/// the last digit in parentheses.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("order | w       | F | beta>=0 | gamma | accuracy (%)\n");
    for r in rows {
        let v = &r.variant;
        let w = match v.weight_mode {
            WeightMode::Uniform => "uniform",
            WeightMode::Learned => "learned",
        };
        let _ = writeln!(
            out,
            "{:>5} | {:<7} | {} | {:<7} | {:<5} | {:.2}({:.0})",
            v.order,
            w,
            v.filter_size,
            if v.nonneg_beta { "yes" } else { "no" },
            v.gamma,
            100.0 * r.report.mean,
            10_000.0 * r.report.stderr
        );
    }
    out
}
