//! Phase discovery and characterization for binary lattice snapshots.
//!
//! The pipeline has two stages. An unsupervised pass turns every
//! parameter point into a density-shift invariant structure factor,
//! reduces it with PCA and clusters the points with a Gaussian mixture.
//! A supervised pass then trains one correlator convolutional network
//! (CCNN) per phase, whose features are exact m-site connected correlators
//! and can be read back as real-space motifs or Fourier-space order
//! parameters.

pub mod ccnn;
pub mod d4;
pub mod data;
pub mod datagen;
pub mod error;
pub mod interpret;
pub mod io;
pub mod rng;
pub mod spectral;
pub mod training;
pub mod unsupervised;

pub use data::{
    mean_density, normalize_global, normalize_per_site, site_mean_density, zero_pad, Dataset,
    GridIndex, Lattice, ParameterPoint, RealMap, Snapshot, SnapshotSet,
};
pub use error::{Error, Result};
