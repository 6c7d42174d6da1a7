//! BatchNorm over the pooled features, without the affine transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    /// Running mean 0 and variance 1, so eval mode starts as the identity
    /// (up to `eps`).
    pub fn new(n_features: usize) -> Self {
        Self {
            running_mean: vec![0.0; n_features],
            running_var: vec![1.0; n_features],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    /// `running ← (1 − momentum)·running + momentum·batch`. The variance
    /// folded in is the unbiased batch variance.
    pub fn update(&mut self, stats: &BatchStats) {
        let n = stats.count as f64;
        let unbias = n / (n - 1.0);
        let mom = self.momentum;
        for j in 0..self.running_mean.len() {
            self.running_mean[j] = (1.0 - mom) * self.running_mean[j] + mom * stats.mean[j];
            self.running_var[j] = (1.0 - mom) * self.running_var[j] + mom * stats.var[j] * unbias;
        }
    }

    pub fn scale(&self, j: usize) -> f64 {
        (self.running_var[j] + self.eps).sqrt()
    }

    pub fn normalize_eval(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.running_mean.len() {
            return Err(Error::shape(self.running_mean.len(), features.len()));
        }
        Ok(features
            .iter()
            .enumerate()
            .map(|(j, c)| (c - self.running_mean[j]) / self.scale(j))
            .collect())
    }
}

/// Per-feature batch mean and biased variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
    pub count: usize,
}

impl BatchStats {
    pub fn of(features: &[Vec<f64>]) -> Result<Self> {
        if features.len() < 2 {
            return Err(Error::invalid("train-mode BatchNorm needs a batch of at least 2"));
        }
        let n = features.len() as f64;
        let d = features[0].len();
        let mut mean = vec![0.0; d];
        for f in features {
            if f.len() != d {
                return Err(Error::shape(d, f.len()));
            }
            mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for f in features {
            for j in 0..d {
                var[j] += (f[j] - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        Ok(Self {
            mean,
            var,
            eps: BN_EPS,
            count: features.len(),
        })
    }

    pub fn normalize(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|f| {
                f.iter()
                    .enumerate()
                    .map(|(j, c)| (c - self.mean[j]) / (self.var[j] + self.eps).sqrt())
                    .collect()
            })
            .collect()
    }

    /// Backpropagates `∂L/∂x̂` to the unnormalized features.
    pub fn backward(&self, xhat: &[Vec<f64>], dxhat: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = xhat.len() as f64;
        let d = self.mean.len();
        let mut mean_d = vec![0.0; d];
        let mut mean_dx = vec![0.0; d];
        for (x, g) in xhat.iter().zip(dxhat) {
            for j in 0..d {
                mean_d[j] += g[j] / n;
                mean_dx[j] += g[j] * x[j] / n;
            }
        }
        xhat.iter()
            .zip(dxhat)
            .map(|(x, g)| {
                (0..d)
                    .map(|j| (g[j] - mean_d[j] - x[j] * mean_dx[j]) / (self.var[j] + self.eps).sqrt())
                    .collect()
            })
            .collect()
    }
}

/// Normalizes a `batch × features` matrix. Train mode uses (and folds
/// into the running state) the batch statistics; eval mode uses the
/// running statistics.
pub fn batchnorm_apply(features: &[Vec<f64>], state: &mut BatchNormState, mode: Mode) -> Result<Vec<Vec<f64>>> {
    match mode {
        Mode::Train => {
            let mut stats = BatchStats::of(features)?;
            stats.eps = state.eps;
            if stats.mean.len() != state.running_mean.len() {
                return Err(Error::shape(state.running_mean.len(), stats.mean.len()));
            }
            state.update(&stats);
            Ok(stats.normalize(features))
        }
        Mode::Eval => features.iter().map(|f| state.normalize_eval(f)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> Vec<Vec<f64>> {
        vec![vec![1.0, 10.0], vec![2.0, -4.0], vec![6.0, 0.5], vec![-3.0, 2.0]]
    }

    #[test]
    fn train_output_is_standardized() {
        let mut s = BatchNormState::new(2);
        let out = batchnorm_apply(&batch(), &mut s, Mode::Train).unwrap();
        for j in 0..2 {
            let mean: f64 = out.iter().map(|r| r[j]).sum::<f64>() / 4.0;
            let var: f64 = out.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn eval_with_identity_stats() {
        let mut s = BatchNormState::new(2);
        let out = batchnorm_apply(&batch(), &mut s, Mode::Eval).unwrap();
        for (a, b) in out.iter().flatten().zip(batch().iter().flatten()) {
            assert!((a - b / (1.0 + BN_EPS).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_update() {
        let mut s = BatchNormState::new(2);
        let stats = BatchStats::of(&batch()).unwrap();
        batchnorm_apply(&batch(), &mut s, Mode::Train).unwrap();
        for j in 0..2 {
            assert!((s.running_mean[j] - 0.1 * stats.mean[j]).abs() < 1e-15);
            let unbiased = stats.var[j] * 4.0 / 3.0;
            assert!((s.running_var[j] - (0.9 + 0.1 * unbiased)).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode() {
        let mut s = BatchNormState::new(2);
        assert!(batchnorm_apply(&batch()[..1], &mut s, Mode::Train).is_err());
        assert!(batchnorm_apply(&batch()[..1], &mut s, Mode::Eval).is_ok());
    }
}
