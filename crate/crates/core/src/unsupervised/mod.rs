//! Unsupervised phase discovery: spectral features, PCA and a Gaussian
//! mixture over parameter points.

mod gmm;
mod kmeans;
mod pca;

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

pub use gmm::{
    bic, bic_from_parts, free_parameters, gmm_fit_em, gmm_restart_search, regularization,
    ClusterAssignment, EmOptions, GmmModel, RestartOutcome, DEFAULT_MAX_ITER, DEFAULT_PATIENCE,
    DEFAULT_TOL,
};
pub use kmeans::kmeans_init;
pub use pca::{pca_fit, pca_project, PcaModel};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::spectral::{dataset_features, DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    pub k_spectral: usize,
    pub n_pca: usize,
    pub k_clusters: usize,
    pub seed: u64,
    pub patience: usize,
    pub em: EmOptions,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            k_spectral: DEFAULT_K,
            n_pca: 10,
            k_clusters: 6,
            seed: 0,
            patience: DEFAULT_PATIENCE,
            em: EmOptions::default(),
        }
    }
}

/// Everything the unsupervised pass produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterResult {
    pub assignment: ClusterAssignment,
    /// `None` when every feature vector is identical.
    pub pca: Option<PcaModel>,
    pub projections: Vec<Vec<f64>>,
    pub gmm: Option<GmmModel>,
    pub attempts: usize,
}

/// Clusters the feature vectors directly (PCA, then restart-searched GMM).
pub fn cluster_features(features: &[Vec<f64>], opts: &ClusterOptions) -> Result<ClusterResult> {
    if features.is_empty() {
        return Err(Error::Empty("feature matrix"));
    }
    let n = features.len();
    let d = features[0].len();
    let first = &features[0];
    if features.iter().all(|f| f == first) {
        let k = opts.k_clusters.max(1);
        let mut r = vec![0.0; k];
        r[0] = 1.0;
        return Ok(ClusterResult {
            assignment: ClusterAssignment {
                labels: vec![0; n],
                responsibilities: vec![r; n],
            },
            pca: None,
            projections: vec![Vec::new(); n],
            gmm: None,
            attempts: 0,
        });
    }
    let n_pca = opts.n_pca.min(n - 1).min(d);
    let pca = pca_fit(features, n_pca)?;
    let projections = pca_project(&pca, features)?;
    let outcome = gmm_restart_search(&projections, opts.k_clusters, opts.seed, opts.em, opts.patience)?;
    let assignment = ClusterAssignment::predict(&outcome.model, &projections)?;
    Ok(ClusterResult {
        assignment,
        pca: Some(pca),
        projections,
        gmm: Some(outcome.model),
        attempts: outcome.attempts,
    })
}

/// Spectral features of every set, reduced and clustered.
pub fn cluster_phase_diagram(dataset: &Dataset, opts: &ClusterOptions) -> Result<ClusterResult> {
    let features = dataset_features(dataset.sets(), opts.k_spectral)?;
    cluster_features(&features, opts)
}

fn contingency<A: Eq + Hash + Clone, B: Eq + Hash + Clone>(a: &[A], b: &[B]) -> HashMap<(A, B), usize> {
    let mut table = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x.clone(), y.clone())).or_insert(0) += 1;
    }
    table
}

/// Fraction of points whose cluster's majority truth label equals their own.
pub fn purity<T: Eq + Hash + Clone>(labels: &[usize], truth: &[T]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::shape(truth.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let table = contingency(labels, truth);
    let mut best: HashMap<usize, usize> = HashMap::new();
    for ((cluster, _), &count) in &table {
        let e = best.entry(*cluster).or_insert(0);
        *e = (*e).max(count);
    }
    Ok(best.values().sum::<usize>() as f64 / labels.len() as f64)
}

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two partitions.
pub fn adjusted_rand<A: Eq + Hash + Clone, B: Eq + Hash + Clone>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let n = a.len();
    let table = contingency(a, b);
    let mut rows: HashMap<A, usize> = HashMap::new();
    let mut cols: HashMap<B, usize> = HashMap::new();
    for ((x, y), &c) in &table {
        *rows.entry(x.clone()).or_insert(0) += c;
        *cols.entry(y.clone()).or_insert(0) += c;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial (all singletons or one block)
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
