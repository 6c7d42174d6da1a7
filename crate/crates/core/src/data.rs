//! Lattice snapshots, parameter-space bookkeeping and the two density
//! normalizations.
//!
//! Coordinates are `(row, col)` with the origin at the top-left corner and
//! row-major storage everywhere.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub height: usize,
    pub width: usize,
}

impl Lattice {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "lattice must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn sites(&self) -> usize {
        self.height * self.width
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            height: 13,
            width: 13,
        }
    }
}

/// Dense real-valued 2D array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} entries for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a map from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &RealMap) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn add_assign(&mut self, other: &RealMap) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn max_abs_diff(&self, other: &RealMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_shape(&self, other: &RealMap) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for RealMap {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RealMap {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// One projective measurement: a binary occupation map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Snapshot {
    lattice: Lattice,
    bits: Vec<u8>,
}

impl Snapshot {
    pub fn new(lattice: Lattice, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != lattice.sites() {
            return Err(Error::shape(lattice.sites(), bits.len()));
        }
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("snapshot entry {bad} is not 0 or 1")));
        }
        Ok(Self { lattice, bits })
    }

    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("ragged snapshot rows"));
        }
        let lattice = Lattice::new(rows.len(), width)?;
        Self::new(lattice, rows.concat())
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.lattice.width + c]
    }

    pub fn occupied(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn to_real(&self) -> RealMap {
        RealMap {
            rows: self.lattice.height,
            cols: self.lattice.width,
            data: self.bits.iter().map(|&b| b as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub delta_over_omega: f64,
    pub rb_over_a: f64,
}

impl ParameterPoint {
    pub fn new(delta_over_omega: f64, rb_over_a: f64) -> Result<Self> {
        if !delta_over_omega.is_finite() || !rb_over_a.is_finite() {
            return Err(Error::NonFinite("parameter point".into()));
        }
        Ok(Self {
            delta_over_omega,
            rb_over_a,
        })
    }

    pub fn distance(&self, other: &ParameterPoint) -> f64 {
        (self.delta_over_omega - other.delta_over_omega)
            .hypot(self.rb_over_a - other.rb_over_a)
    }
}

/// All snapshots recorded at one parameter-space point.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    point: ParameterPoint,
    lattice: Lattice,
    snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new(point: ParameterPoint, snapshots: Vec<Snapshot>) -> Result<Self> {
        let first = snapshots.first().ok_or(Error::Empty("snapshot set"))?;
        let lattice = first.lattice();
        if let Some(s) = snapshots.iter().find(|s| s.lattice() != lattice) {
            return Err(Error::shape(
                format!("{}x{}", lattice.height, lattice.width),
                format!("{}x{}", s.lattice().height, s.lattice().width),
            ));
        }
        Ok(Self {
            point,
            lattice,
            snapshots,
        })
    }

    pub fn point(&self) -> ParameterPoint {
        self.point
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Per-site density fluctuation maps δn_i(x) for every snapshot.
    pub fn fluctuation_maps(&self) -> Vec<RealMap> {
        let nbar = site_mean_density_unchecked(self);
        self.snapshots
            .iter()
            .map(|s| subtract(s, |i| nbar.data[i]))
            .collect()
    }

    /// Globally normalized maps ñ_i(x) = n_i(x) − n̄.
    pub fn globally_normalized_maps(&self) -> Vec<RealMap> {
        let nbar = mean_density_unchecked(self);
        self.snapshots.iter().map(|s| subtract(s, |_| nbar)).collect()
    }
}

/// Grid placement of a set inside a rectangular parameter scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sets: Vec<SnapshotSet>,
    grid: Option<Vec<GridIndex>>,
}

impl Dataset {
    pub fn new(sets: Vec<SnapshotSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(Self { sets, grid: None })
    }

    /// Attaches grid coordinates, one per set; they must be pairwise distinct.
    pub fn with_grid(mut self, grid: Vec<GridIndex>) -> Result<Self> {
        if grid.len() != self.sets.len() {
            return Err(Error::shape(self.sets.len(), grid.len()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = grid.iter().find(|g| !seen.insert(**g)) {
            return Err(Error::invalid(format!(
                "grid cell ({}, {}) assigned twice",
                dup.row, dup.col
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn sets(&self) -> &[SnapshotSet] {
        &self.sets
    }

    pub fn grid(&self) -> Option<&[GridIndex]> {
        self.grid.as_deref()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Index of the set closest to `point`, if within `tolerance`.
    pub fn find_point(&self, point: &ParameterPoint, tolerance: f64) -> Option<usize> {
        self.sets
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.point().distance(point)))
            .filter(|&(_, d)| d <= tolerance)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

fn subtract(s: &Snapshot, offset: impl Fn(usize) -> f64) -> RealMap {
    let l = s.lattice();
    RealMap {
        rows: l.height,
        cols: l.width,
        data: s
            .bits
            .iter()
            .enumerate()
            .map(|(i, &b)| b as f64 - offset(i))
            .collect(),
    }
}

fn mean_density_unchecked(set: &SnapshotSet) -> f64 {
    let total: usize = set.snapshots.iter().map(Snapshot::occupied).sum();
    total as f64 / (set.len() * set.lattice.sites()) as f64
}

fn site_mean_density_unchecked(set: &SnapshotSet) -> RealMap {
    let l = set.lattice;
    let mut counts = vec![0usize; l.sites()];
    for s in &set.snapshots {
        for (c, &b) in counts.iter_mut().zip(&s.bits) {
            *c += b as usize;
        }
    }
    let n = set.len() as f64;
    RealMap {
        rows: l.height,
        cols: l.width,
        data: counts.into_iter().map(|c| c as f64 / n).collect(),
    }
}

/// n̄: the density averaged over all sites and snapshots of the set.
pub fn mean_density(set: &SnapshotSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("snapshot set"));
    }
    Ok(mean_density_unchecked(set))
}

/// n̄(x): the snapshot-averaged density at each site.
pub fn site_mean_density(set: &SnapshotSet) -> Result<RealMap> {
    if set.is_empty() {
        return Err(Error::Empty("snapshot set"));
    }
    Ok(site_mean_density_unchecked(set))
}

pub fn normalize_global(snapshot: &Snapshot, nbar: f64) -> Result<RealMap> {
    if !(0.0..=1.0).contains(&nbar) {
        return Err(Error::invalid(format!("mean density {nbar} outside [0, 1]")));
    }
    Ok(subtract(snapshot, |_| nbar))
}

pub fn normalize_per_site(snapshot: &Snapshot, nbar_map: &RealMap) -> Result<RealMap> {
    let l = snapshot.lattice();
    if nbar_map.shape() != (l.height, l.width) {
        return Err(Error::shape(
            format!("{}x{}", l.height, l.width),
            format!("{}x{}", nbar_map.rows, nbar_map.cols),
        ));
    }
    Ok(subtract(snapshot, |i| nbar_map.data[i]))
}

/// Surrounds `map` with `pad` rings of zeros.
pub fn zero_pad(map: &RealMap, pad: usize) -> RealMap {
    let (h, w) = map.shape();
    let mut out = RealMap::zeros(h + 2 * pad, w + 2 * pad);
    for r in 0..h {
        let src = &map.data[r * w..(r + 1) * w];
        let start = (r + pad) * out.cols + pad;
        out.data[start..start + w].copy_from_slice(src);
    }
    out
}
