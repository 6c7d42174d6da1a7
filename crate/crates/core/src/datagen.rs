//! Synthetic snapshot generator for idealized ordered phases.
//!
//! Tiles are placed with a random translation within their period and a
//! random D4 orientation per snapshot. The distinct placements are cycled
//! in shuffled blocks so that every placement appears equally often (up to
//! one block). Set `fixed_origin` to tile every snapshot from `(0, 0)`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::d4::D4;
use crate::data::{Dataset, GridIndex, Lattice, ParameterPoint, Snapshot, SnapshotSet};
use crate::error::{Error, Result};
use crate::rng::stream;

pub const DEFAULT_Q: f64 = 0.3;
pub const DEFAULT_P_BULK: f64 = 0.15;
pub const DEFAULT_P_DISORDERED: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    One,
    Zero,
    Bernoulli(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    /// `(rows, cols)`.
    pub period: (usize, usize),
    /// Row-major cells.
    pub cells: Vec<Cell>,
}

impl Tile {
    pub fn new(period: (usize, usize), cells: Vec<Cell>) -> Result<Self> {
        if period.0 == 0 || period.1 == 0 || cells.len() != period.0 * period.1 {
            return Err(Error::shape(period.0 * period.1, cells.len()));
        }
        for c in &cells {
            if let Cell::Bernoulli(q) = c {
                if !(0.0..=1.0).contains(q) {
                    return Err(Error::invalid(format!("bernoulli cell probability {q} outside [0, 1]")));
                }
            }
        }
        Ok(Self { period, cells })
    }

    fn from_sites(period: (usize, usize), sites: &[(usize, usize)]) -> Self {
        let mut cells = vec![Cell::Zero; period.0 * period.1];
        for &(r, c) in sites {
            cells[r * period.1 + c] = Cell::One;
        }
        Self { period, cells }
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.period.1 + c]
    }

    /// Expected occupation per site.
    pub fn density(&self) -> f64 {
        let total: f64 = self
            .cells
            .iter()
            .map(|c| match c {
                Cell::One => 1.0,
                Cell::Zero => 0.0,
                Cell::Bernoulli(q) => *q,
            })
            .sum();
        total / self.cells.len() as f64
    }
}

/// Built-in tiles: `checkerboard`, `striated` (with superposition
/// probability `q` on the (1,1) sublattice), `star` and `rhombic`.
pub fn ideal_tile(name: &str, q: f64) -> Result<Tile> {
    match name {
        "checkerboard" => Ok(Tile::from_sites((2, 2), &[(0, 0), (1, 1)])),
        "striated" => Tile::new((2, 2), vec![Cell::One, Cell::Zero, Cell::Zero, Cell::Bernoulli(q)]),
        "star" => Ok(Tile::from_sites((4, 4), &[(0, 0), (0, 2), (2, 1), (2, 3)])),
        // {x : cos(k1·x) + cos(k2·x) > 1} with k1 = (π, π/4), k2 = (2π/5, π)
        "rhombic" => Ok(Tile::from_sites(
            (10, 8),
            &[
                (0, 0),
                (1, 4),
                (2, 1),
                (2, 7),
                (3, 3),
                (3, 5),
                (4, 0),
                (5, 4),
                (6, 0),
                (7, 3),
                (7, 5),
                (8, 1),
                (8, 7),
                (9, 4),
            ],
        )),
        other => Err(Error::invalid(format!("unknown tile '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseKind {
    /// A built-in tile by name.
    Ideal { tile: String },
    Custom { tile: Tile },
    /// Alternating occupation around the ring `depth` sites in from the
    /// boundary, i.i.d. Bernoulli(`p_bulk`) elsewhere.
    EdgeOrdered { depth: usize, p_bulk: f64 },
    Disordered { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: PhaseKind,
    /// Symmetric bit-flip probability per site.
    #[serde(default)]
    pub p_flip: f64,
    /// Superposition probability for the striated tile.
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub fixed_origin: bool,
}

fn default_q() -> f64 {
    DEFAULT_Q
}

impl PhaseSpec {
    pub fn ideal(name: &str, p_flip: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: PhaseKind::Ideal { tile: name.to_string() },
            p_flip,
            q: DEFAULT_Q,
            fixed_origin: false,
        }
    }

    pub fn edge_ordered(name: &str, depth: usize, p_flip: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: PhaseKind::EdgeOrdered {
                depth,
                p_bulk: DEFAULT_P_BULK,
            },
            p_flip,
            q: DEFAULT_Q,
            fixed_origin: false,
        }
    }

    pub fn disordered(name: &str, p: f64, p_flip: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: PhaseKind::Disordered { p },
            p_flip,
            q: DEFAULT_Q,
            fixed_origin: false,
        }
    }

    fn tile(&self) -> Result<Option<Tile>> {
        match &self.kind {
            PhaseKind::Ideal { tile } => ideal_tile(tile, self.q).map(Some),
            PhaseKind::Custom { tile } => Tile::new(tile.period, tile.cells.clone()).map(Some),
            _ => Ok(None),
        }
    }
}

/// Cell pattern over the whole lattice for one tile placement.
type Placement = Vec<Cell>;

fn placements(tile: &Tile, lattice: Lattice, fixed_origin: bool) -> Vec<Placement> {
    let (py, px) = (tile.period.0 as i64, tile.period.1 as i64);
    let render = |g: &D4, ty: i64, tx: i64| -> Placement {
        let mut out = Vec::with_capacity(lattice.sites());
        for r in 0..lattice.height as i64 {
            for c in 0..lattice.width as i64 {
                let (u, v) = g.apply_vec((r, c));
                out.push(tile.cell((u + ty).rem_euclid(py) as usize, (v + tx).rem_euclid(px) as usize));
            }
        }
        out
    };
    if fixed_origin {
        return vec![render(&D4::IDENTITY, 0, 0)];
    }
    let mut unique: Vec<Placement> = Vec::new();
    for g in D4::ALL {
        for ty in 0..py {
            for tx in 0..px {
                let p = render(&g, ty, tx);
                if !unique.contains(&p) {
                    unique.push(p);
                }
            }
        }
    }
    unique
}

/// Indices `0..k` cycled in independently shuffled blocks.
fn balanced_choices(k: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut block: Vec<usize> = (0..k).collect();
        block.shuffle(rng);
        out.extend(block);
    }
    out.truncate(n);
    out
}

/// Sites of the ring `depth` steps in from the boundary, in walking order.
fn ring(lattice: Lattice, depth: usize) -> Vec<(usize, usize)> {
    let (h, w) = (lattice.height, lattice.width);
    let (top, left, bottom, right) = (depth, depth, h - 1 - depth, w - 1 - depth);
    if top == bottom || left == right {
        let mut out = Vec::new();
        for r in top..=bottom {
            for c in left..=right {
                out.push((r, c));
            }
        }
        return out;
    }
    let mut out = Vec::new();
    for c in left..right {
        out.push((top, c));
    }
    for r in top..bottom {
        out.push((r, right));
    }
    for c in (left + 1..=right).rev() {
        out.push((bottom, c));
    }
    for r in (top + 1..=bottom).rev() {
        out.push((r, left));
    }
    out
}

fn flip(bit: u8, p: f64, rng: &mut ChaCha8Rng) -> u8 {
    if p > 0.0 && rng.gen::<f64>() < p {
        1 - bit
    } else {
        bit
    }
}

/// Renders `n` snapshots of a phase at `point`.
pub fn render(spec: &PhaseSpec, point: ParameterPoint, lattice: Lattice, n: usize, seed: u64) -> Result<SnapshotSet> {
    if !(0.0..0.5).contains(&spec.p_flip) {
        return Err(Error::invalid(format!("p_flip {} outside [0, 0.5)", spec.p_flip)));
    }
    if n == 0 {
        return Err(Error::Empty("snapshot count"));
    }
    let mut rng = stream(seed, 0);
    let sites = lattice.sites();
    let mut snapshots = Vec::with_capacity(n);
    match (&spec.kind, spec.tile()?) {
        (_, Some(tile)) => {
            if lattice.height < tile.period.0 || lattice.width < tile.period.1 {
                return Err(Error::invalid(format!(
                    "lattice {}x{} smaller than tile period {:?}",
                    lattice.height, lattice.width, tile.period
                )));
            }
            let options = placements(&tile, lattice, spec.fixed_origin);
            for choice in balanced_choices(options.len(), n, &mut rng) {
                let bits = options[choice]
                    .iter()
                    .map(|cell| {
                        let b = match cell {
                            Cell::One => 1,
                            Cell::Zero => 0,
                            Cell::Bernoulli(q) => u8::from(rng.gen::<f64>() < *q),
                        };
                        flip(b, spec.p_flip, &mut rng)
                    })
                    .collect();
                snapshots.push(Snapshot::new(lattice, bits)?);
            }
        }
        (PhaseKind::EdgeOrdered { depth, p_bulk }, None) => {
            if 2 * depth >= lattice.height.min(lattice.width) {
                return Err(Error::invalid(format!("ring depth {depth} does not fit the lattice")));
            }
            let ring = ring(lattice, *depth);
            let phases = if spec.fixed_origin { vec![0; n] } else { balanced_choices(2, n, &mut rng) };
            for phase in phases {
                let mut bits: Vec<u8> = (0..sites).map(|_| u8::from(rng.gen::<f64>() < *p_bulk)).collect();
                for (i, &(r, c)) in ring.iter().enumerate() {
                    bits[r * lattice.width + c] = u8::from((i + phase) % 2 == 0);
                }
                let bits = bits.into_iter().map(|b| flip(b, spec.p_flip, &mut rng)).collect();
                snapshots.push(Snapshot::new(lattice, bits)?);
            }
        }
        (PhaseKind::Disordered { p }, None) => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::invalid(format!("occupation probability {p} outside [0, 1]")));
            }
            for _ in 0..n {
                let bits = (0..sites)
                    .map(|_| flip(u8::from(rng.gen::<f64>() < *p), spec.p_flip, &mut rng))
                    .collect();
                snapshots.push(Snapshot::new(lattice, bits)?);
            }
        }
        _ => unreachable!("tile kinds always yield a tile"),
    }
    SnapshotSet::new(point, snapshots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPoint {
    pub row: usize,
    pub col: usize,
    pub delta_over_omega: f64,
    pub rb_over_a: f64,
    /// Name of a phase in [`GenerationPlan::phases`].
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub lattice: [usize; 2],
    pub n_snapshots: usize,
    pub seed: u64,
    pub phases: Vec<PhaseSpec>,
    pub points: Vec<PlanPoint>,
}

pub const DEFAULT_DELTAS: [f64; 16] = [
    -2.09, -1.62, -1.16, -0.4, 0.69, 0.93, 1.5, 2.33, 2.56, 2.79, 3.02, 3.26, 3.95, 4.19, 4.42, 4.65,
];
pub const DEFAULT_RBS: [f64; 8] = [1.13, 1.23, 1.35, 1.46, 1.56, 1.71, 1.81, 1.97];

/// Ground-truth region of a `(Δ/Ω, R_b/a)` point in the default plan.
pub fn default_region(delta: f64, rb: f64) -> &'static str {
    if delta < 0.5 {
        "disordered"
    } else if rb < 1.35 {
        "checkerboard"
    } else if delta < 2.0 {
        "edge_ordered"
    } else if rb < 1.6 {
        "striated"
    } else if rb < 1.9 {
        "star"
    } else {
        "rhombic"
    }
}

impl GenerationPlan {
    /// 16 × 8 grid over six regions, 13 × 13 lattices, 250 snapshots.
    pub fn default_grid(seed: u64, p_flip: f64) -> Self {
        let phases = vec![
            PhaseSpec::ideal("checkerboard", p_flip),
            PhaseSpec::ideal("striated", p_flip),
            PhaseSpec::ideal("star", p_flip),
            PhaseSpec::ideal("rhombic", p_flip),
            PhaseSpec::edge_ordered("edge_ordered", 0, p_flip),
            PhaseSpec::disordered("disordered", DEFAULT_P_DISORDERED, p_flip),
        ];
        let mut points = Vec::new();
        for (row, &d) in DEFAULT_DELTAS.iter().enumerate() {
            for (col, &r) in DEFAULT_RBS.iter().enumerate() {
                points.push(PlanPoint {
                    row,
                    col,
                    delta_over_omega: d,
                    rb_over_a: r,
                    phase: default_region(d, r).to_string(),
                });
            }
        }
        Self {
            lattice: [13, 13],
            n_snapshots: 250,
            seed,
            phases,
            points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Empty("generation plan"));
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.phases {
            if !names.insert(p.name.as_str()) {
                return Err(Error::invalid(format!("duplicate phase name '{}'", p.name)));
            }
            p.tile()?;
        }
        for pt in &self.points {
            if !names.contains(pt.phase.as_str()) {
                return Err(Error::invalid(format!("unknown phase '{}'", pt.phase)));
            }
        }
        Lattice::new(self.lattice[0], self.lattice[1])?;
        Ok(())
    }
}

/// `"Δ,R_b"` key → phase name, in the format used by the sidecar file.
pub type GroundTruth = BTreeMap<String, String>;

pub fn point_key(point: &ParameterPoint) -> String {
    format!("{},{}", point.delta_over_omega, point.rb_over_a)
}

/// One set per plan point; the RNG of set `i` is seeded by `(seed, i)`.
pub fn generate_dataset(plan: &GenerationPlan) -> Result<(Dataset, GroundTruth)> {
    plan.validate()?;
    let lattice = Lattice::new(plan.lattice[0], plan.lattice[1])?;
    let specs: BTreeMap<&str, &PhaseSpec> = plan.phases.iter().map(|p| (p.name.as_str(), p)).collect();
    let sets = plan
        .points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            let point = ParameterPoint::new(pt.delta_over_omega, pt.rb_over_a)?;
            render(specs[pt.phase.as_str()], point, lattice, plan.n_snapshots, crate::rng::derive_seed(plan.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = plan
        .points
        .iter()
        .zip(&sets)
        .map(|(pt, s)| (point_key(&s.point()), pt.phase.clone()))
        .collect();
    let grid = plan.points.iter().map(|p| GridIndex { row: p.row, col: p.col }).collect();
    Ok((Dataset::new(sets)?.with_grid(grid)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{mean_density, site_mean_density};
    use crate::spectral::mean_power_spectrum;

    fn origin() -> ParameterPoint {
        ParameterPoint::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn tile_densities() {
        assert_eq!(ideal_tile("checkerboard", 0.3).unwrap().density(), 0.5);
        assert_eq!(ideal_tile("striated", 0.0).unwrap().density(), 0.25);
        assert_eq!(ideal_tile("star", 0.0).unwrap().density(), 0.25);
        assert!((ideal_tile("rhombic", 0.0).unwrap().density() - 0.175).abs() < 1e-15);
        assert!(ideal_tile("hexatic", 0.0).is_err());
    }

    #[test]
    fn rendered_density_matches_tile_on_commensurate_lattice() {
        for name in ["checkerboard", "striated", "star"] {
            let set = render(&PhaseSpec { q: 0.0, ..PhaseSpec::ideal(name, 0.0) }, origin(), Lattice::square(12).unwrap(), 40, 1).unwrap();
            let d = mean_density(&set).unwrap();
            assert_eq!(d, ideal_tile(name, 0.0).unwrap().density(), "{name}");
        }
        let set = render(&PhaseSpec::ideal("rhombic", 0.0), origin(), Lattice::square(40).unwrap(), 10, 1).unwrap();
        assert!((mean_density(&set).unwrap() - 0.175).abs() < 1e-15);
    }

    #[test]
    fn fixed_origin_deterministic_tile_repeats_exactly() {
        let spec = PhaseSpec {
            fixed_origin: true,
            ..PhaseSpec::ideal("checkerboard", 0.0)
        };
        let set = render(&spec, origin(), Lattice::square(5).unwrap(), 6, 3).unwrap();
        for s in set.snapshots() {
            assert_eq!(s, &set.snapshots()[0]);
            assert_eq!(s.get(0, 0), 1);
            assert_eq!(s.get(0, 1), 0);
        }
    }

    #[test]
    fn checkerboard_domains_are_balanced() {
        let set = render(&PhaseSpec::ideal("checkerboard", 0.0), origin(), Lattice::square(13).unwrap(), 250, 9).unwrap();
        let first = set.snapshots().iter().filter(|s| s.get(0, 0) == 1).count();
        assert_eq!(first, 125);
    }

    #[test]
    fn disordered_site_means_within_binomial_bounds() {
        let set = render(&PhaseSpec::disordered("d", 0.5, 0.0), origin(), Lattice::square(13).unwrap(), 250, 4).unwrap();
        let sigma = (0.25f64 / 250.0).sqrt();
        let means = site_mean_density(&set).unwrap();
        // 169 sites: allow a 4σ envelope so the check is not flaky
        assert!(means.as_slice().iter().all(|m| (m - 0.5).abs() < 4.0 * sigma));
    }

    #[test]
    fn checkerboard_peak_at_pi_pi() {
        let set = render(&PhaseSpec::ideal("checkerboard", 0.03), origin(), Lattice::square(13).unwrap(), 100, 2).unwrap();
        let s = mean_power_spectrum(&set, 16).unwrap();
        assert_eq!(s.argmax(), (8, 8));
    }

    #[test]
    fn striated_weight_on_half_wavevectors() {
        let set = render(&PhaseSpec::ideal("striated", 0.0), origin(), Lattice::square(13).unwrap(), 100, 2).unwrap();
        let s = mean_power_spectrum(&set, 16).unwrap();
        let top = s.top(4);
        assert!(top.contains(&(8, 0)) || top.contains(&(0, 8)), "{top:?}");
    }

    #[test]
    fn star_has_quarter_wavevector_weight() {
        let set = render(&PhaseSpec::ideal("star", 0.0), origin(), Lattice::square(13).unwrap(), 100, 2).unwrap();
        let s = mean_power_spectrum(&set, 16).unwrap();
        let top = s.top(8);
        assert!(top.iter().any(|&(a, b)| a == 4 || a == 12 || b == 4 || b == 12), "{top:?}");
    }

    #[test]
    fn rhombic_peaks() {
        let set = render(&PhaseSpec::ideal("rhombic", 0.0), origin(), Lattice::square(13).unwrap(), 200, 2).unwrap();
        let s = mean_power_spectrum(&set, 16).unwrap();
        let top = s.top(16);
        // (π, π/4) and the grid point nearest (2π/5, π), up to D4
        assert!(top.contains(&(8, 2)) || top.contains(&(2, 8)), "{top:?}");
        assert!(top.contains(&(3, 8)) || top.contains(&(8, 3)) || top.contains(&(13, 8)), "{top:?}");
    }

    #[test]
    fn ring_walk_alternates_consistently() {
        let r = ring(Lattice::square(13).unwrap(), 0);
        assert_eq!(r.len(), 48);
        let r1 = ring(Lattice::square(13).unwrap(), 1);
        assert_eq!(r1.len(), 40);
        let mut seen = std::collections::HashSet::new();
        assert!(r.iter().all(|p| seen.insert(*p)));
    }

    #[test]
    fn default_plan_has_six_regions() {
        let plan = GenerationPlan::default_grid(0, 0.03);
        assert_eq!(plan.points.len(), 128);
        let mut counts = BTreeMap::new();
        for p in &plan.points {
            *counts.entry(p.phase.as_str()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        assert_eq!(counts["disordered"], 32);
        assert_eq!(counts["checkerboard"], 24);
        assert_eq!(counts["edge_ordered"], 18);
        assert_eq!(counts["striated"], 27);
        assert_eq!(counts["star"], 18);
        assert_eq!(counts["rhombic"], 9);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut plan = GenerationPlan::default_grid(5, 0.03);
        plan.points.truncate(3);
        plan.n_snapshots = 4;
        let (a, ta) = generate_dataset(&plan).unwrap();
        let (b, tb) = generate_dataset(&plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        plan.points[0].phase = "nope".into();
        assert!(generate_dataset(&plan).is_err());
    }
}
