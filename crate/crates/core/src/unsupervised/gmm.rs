//! Full-covariance Gaussian mixtures fitted by expectation maximization.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_init, nearest};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_PATIENCE: usize = 500;
/// Covariance floor relative to the mean per-feature variance.
pub const REG_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` matrices.
    pub covariances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood after every E-step, starting from the k-means
    /// initialization.
    pub trace: Vec<f64>,
    pub regularization: f64,
}

impl GmmModel {
    pub fn n_clusters(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        let d = self.dims();
        DMatrix::from_row_slice(d, d, &self.covariances[k])
    }

    /// Posterior cluster probabilities for each point.
    pub fn responsibilities(&self, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let params = Params::from_model(self)?;
        let (resp, _) = params.e_step(data)?;
        Ok(resp)
    }
}

/// Hard labels plus the soft responsibilities they were taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub responsibilities: Vec<Vec<f64>>,
}

impl ClusterAssignment {
    pub fn from_responsibilities(responsibilities: Vec<Vec<f64>>) -> Self {
        let labels = responsibilities
            .iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect();
        Self {
            labels,
            responsibilities,
        }
    }

    pub fn predict(model: &GmmModel, data: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::from_responsibilities(model.responsibilities(data)?))
    }
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

struct Params {
    comps: Vec<Component>,
}

impl Params {
    fn from_model(model: &GmmModel) -> Result<Self> {
        let comps = (0..model.n_clusters())
            .map(|k| {
                Component::new(
                    model.weights[k].ln(),
                    DVector::from_vec(model.means[k].clone()),
                    model.covariance(k),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { comps })
    }

    /// Responsibilities and the total log-likelihood.
    fn e_step(&self, data: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
        let d = self.comps[0].mean.len() as f64;
        let norm = d * (2.0 * PI).ln();
        let mut total = 0.0;
        let mut resp = Vec::with_capacity(data.len());
        let mut logp = vec![0.0; self.comps.len()];
        for x in data {
            let x = DVector::from_column_slice(x);
            for (lp, c) in logp.iter_mut().zip(&self.comps) {
                let diff = &x - &c.mean;
                let y = c
                    .chol
                    .l_dirty()
                    .solve_lower_triangular(&diff)
                    .expect("cholesky factor is invertible");
                *lp = c.log_weight - 0.5 * (norm + c.log_det + y.norm_squared());
            }
            let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logp.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse;
            resp.push(logp.iter().map(|v| (v - lse).exp()).collect());
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("mixture log-likelihood".into()));
        }
        Ok((resp, total))
    }

    fn m_step(data: &[Vec<f64>], resp: &[Vec<f64>], reg: f64, previous: Option<&Params>) -> Result<Self> {
        let n = data.len();
        let d = data[0].len();
        let k = resp[0].len();
        let tiny = 10.0 * f64::EPSILON;
        let mut comps = Vec::with_capacity(k);
        for j in 0..k {
            let nk: f64 = resp.iter().map(|r| r[j]).sum::<f64>() + tiny;
            let mut mean = DVector::zeros(d);
            for (x, r) in data.iter().zip(resp) {
                mean.axpy(r[j], &DVector::from_column_slice(x), 1.0);
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for (x, r) in data.iter().zip(resp) {
                let diff = DVector::from_column_slice(x) - &mean;
                cov.ger(r[j], &diff, &diff, 1.0);
            }
            cov /= nk;
            if nk <= 2.0 * tiny {
                // an empty component keeps its previous location and shape
                if let Some(prev) = previous {
                    mean = prev.comps[j].mean.clone();
                    cov = prev.comps[j].cov.clone();
                    for i in 0..d {
                        cov[(i, i)] -= reg;
                    }
                }
            }
            for i in 0..d {
                cov[(i, i)] += reg;
            }
            comps.push(Component::new((nk / (n as f64 + k as f64 * tiny)).ln(), mean, cov)?);
        }
        Ok(Self { comps })
    }

    fn into_model(self, log_likelihood: f64, trace: Vec<f64>, reg: f64) -> GmmModel {
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covariances = Vec::new();
        for c in self.comps {
            weights.push(c.log_weight.exp());
            means.push(c.mean.iter().copied().collect());
            let d = c.cov.nrows();
            covariances.push((0..d * d).map(|i| c.cov[(i / d, i % d)]).collect());
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        GmmModel {
            weights,
            means,
            covariances,
            log_likelihood,
            trace,
            regularization: reg,
        }
    }
}

impl Component {
    fn new(log_weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            log_weight,
            mean,
            cov,
            chol,
            log_det,
        })
    }
}

/// ε = 1e−6 × mean per-feature variance of `data`.
pub fn regularization(data: &[Vec<f64>]) -> f64 {
    let n = data.len() as f64;
    let d = data[0].len();
    let mut total = 0.0;
    for j in 0..d {
        let mean = data.iter().map(|x| x[j]).sum::<f64>() / n;
        total += data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
    }
    REG_SCALE * total / d as f64
}

fn validate(data: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("a mixture needs at least one component"));
    }
    if data.len() < k {
        return Err(Error::invalid(format!(
            "{} points cannot support {k} components",
            data.len()
        )));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("data must be non-empty, rectangular vectors"));
    }
    Ok(())
}

/// EM with full covariances from the given initial means.
///
/// Responsibilities start as a hard assignment to the nearest initial
/// mean. Iteration stops once the log-likelihood improves by less than
/// `opts.tol`, when a step would lower it, or after `opts.max_iter`
/// M-steps.
pub fn gmm_fit_em(data: &[Vec<f64>], k: usize, init_means: &[Vec<f64>], opts: EmOptions) -> Result<GmmModel> {
    validate(data, k)?;
    if init_means.len() != k {
        return Err(Error::shape(k, init_means.len()));
    }
    let reg = regularization(data);
    let mut resp: Vec<Vec<f64>> = data
        .iter()
        .map(|x| {
            let mut r = vec![0.0; k];
            r[nearest(x, init_means)] = 1.0;
            r
        })
        .collect();
    let mut params = Params::m_step(data, &resp, reg, None)?;
    let (r, mut ll) = params.e_step(data)?;
    resp = r;
    let mut trace = vec![ll];
    for _ in 0..opts.max_iter {
        let next = Params::m_step(data, &resp, reg, Some(&params))?;
        let (r, next_ll) = next.e_step(data)?;
        // the εI floor makes the M-step inexact for collapsing components;
        // a step that lowers the likelihood ends the iteration instead
        if next_ll < ll {
            break;
        }
        params = next;
        resp = r;
        trace.push(next_ll);
        let improvement = next_ll - ll;
        ll = next_ll;
        if improvement < opts.tol {
            break;
        }
    }
    Ok(params.into_model(ll, trace, reg))
}

/// Outcome of [`gmm_restart_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub model: GmmModel,
    /// Total fits performed.
    pub attempts: usize,
    /// Index of the attempt that produced `model`.
    pub best_attempt: usize,
}

/// Repeats k-means initialization and EM with fresh seeds, keeping the
/// best log-likelihood, until `patience` consecutive attempts fail to
/// improve on it.
pub fn gmm_restart_search(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    opts: EmOptions,
    patience: usize,
) -> Result<RestartOutcome> {
    validate(data, k)?;
    let mut best: Option<(GmmModel, usize)> = None;
    let mut since_improvement = 0;
    let mut attempt = 0;
    while best.is_none() || since_improvement < patience {
        let init = kmeans_init(data, k, derive_seed(seed, attempt as u64))?;
        let model = gmm_fit_em(data, k, &init, opts)?;
        let improved = match &best {
            None => true,
            Some((b, _)) => {
                model.log_likelihood > b.log_likelihood + 1e-9 * b.log_likelihood.abs().max(1.0)
            }
        };
        if improved {
            best = Some((model, attempt));
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        attempt += 1;
    }
    let (model, best_attempt) = best.expect("at least one attempt");
    Ok(RestartOutcome {
        model,
        attempts: attempt,
        best_attempt,
    })
}

/// Free parameters of a full-covariance mixture: weights, means and
/// covariances.
pub fn free_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

/// Bayesian information criterion `p ln n − 2 ln L̂`.
pub fn bic(model: &GmmModel, n_points: usize) -> f64 {
    bic_from_parts(model.n_clusters(), model.dims(), model.log_likelihood, n_points)
}

pub fn bic_from_parts(k: usize, d: usize, log_likelihood: f64, n_points: usize) -> f64 {
    free_parameters(k, d) as f64 * (n_points as f64).ln() - 2.0 * log_likelihood
}
