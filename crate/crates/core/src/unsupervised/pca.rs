use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal axes of a feature matrix, sorted by explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Maps projections back to feature space.
    pub fn reconstruct(&self, projections: &[Vec<f64>]) -> Vec<Vec<f64>> {
        projections
            .iter()
            .map(|p| {
                let mut x = self.mean.clone();
                for (coef, comp) in p.iter().zip(&self.components) {
                    for (xi, ci) in x.iter_mut().zip(comp) {
                        *xi += coef * ci;
                    }
                }
                x
            })
            .collect()
    }
}

pub(crate) fn to_matrix(features: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows = features.len();
    let dims = features.first().map_or(0, Vec::len);
    if let Some(bad) = features.iter().find(|f| f.len() != dims) {
        return Err(Error::shape(dims, bad.len()));
    }
    Ok(DMatrix::from_fn(rows, dims, |i, j| features[i][j]))
}

/// Fits the top `n_components` eigenvectors of the sample covariance
/// (normalized by `points − 1`).
///
/// Each component is oriented so that its largest-magnitude coordinate is
/// positive, with ties going to the lowest index.
pub fn pca_fit(features: &[Vec<f64>], n_components: usize) -> Result<PcaModel> {
    let x = to_matrix(features)?;
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two points"));
    }
    if n_components == 0 || n_components > (n - 1).min(d) {
        return Err(Error::invalid(format!(
            "n_components = {n_components} must lie in 1..={}",
            (n - 1).min(d)
        )));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let mut centered = x;
    for j in 0..d {
        let m = mean[j];
        centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let total: f64 = centered.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::Degenerate("all feature vectors are identical".into()));
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &i in order.iter().take(n_components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let mut pivot = 0;
        for (j, val) in v.iter().enumerate() {
            if val.abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// `(features − mean) · componentsᵀ`.
pub fn pca_project(model: &PcaModel, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .map(|f| {
            if f.len() != model.dims() {
                return Err(Error::shape(model.dims(), f.len()));
            }
            Ok(model
                .components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(f.iter().zip(&model.mean))
                        .map(|(ci, (fi, mi))| ci * (fi - mi))
                        .sum()
                })
                .collect())
        })
        .collect()
}
