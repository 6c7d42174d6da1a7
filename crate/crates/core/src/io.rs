//! Dataset manifests, snapshot data files, ground-truth sidecars and CSV
//! provenance lines.
//!
//! A data file holds `count` blocks of `h` lines of `w` characters from
//! `{0, 1}`, blocks separated by blank lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GridIndex, Lattice, ParameterPoint, Snapshot, SnapshotSet};
use crate::datagen::GroundTruth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// `# tool=… version=… config_hash=… seed=…`
    pub fn csv_line(&self) -> String {
        format!(
            "# tool={} version={} config_hash={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub delta_over_omega: f64,
    pub rb_over_a: f64,
    pub lattice: [usize; 2],
    pub count: usize,
    /// Relative to the manifest's directory.
    pub data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub sets: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub phases: GroundTruth,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn format_snapshots(snapshots: &[Snapshot]) -> String {
    let mut out = String::new();
    for (i, s) in snapshots.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let l = s.lattice();
        for r in 0..l.height {
            for c in 0..l.width {
                out.push(if s.get(r, c) == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
    }
    out
}

/// Strict parser: every non-blank line must have exactly `w` characters
/// from `{0, 1}`, every block exactly `h` lines, and there must be exactly
/// `count` blocks.
pub fn parse_snapshots(text: &str, lattice: Lattice, count: usize, path: &Path) -> Result<Vec<Snapshot>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut blocks: Vec<Vec<u8>> = Vec::new();
    let mut current: Vec<u8> = Vec::new();
    let mut rows = 0;
    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            if rows > 0 {
                if rows != lattice.height {
                    return Err(perr(lineno, format!("block has {rows} rows, expected {}", lattice.height)));
                }
                blocks.push(std::mem::take(&mut current));
                rows = 0;
            }
            continue;
        }
        if line.len() != lattice.width {
            return Err(perr(lineno, format!("{} characters, expected {}", line.len(), lattice.width)));
        }
        for ch in line.chars() {
            match ch {
                '0' => current.push(0),
                '1' => current.push(1),
                other => return Err(perr(lineno, format!("invalid character {other:?}"))),
            }
        }
        rows += 1;
        if rows > lattice.height {
            return Err(perr(lineno, format!("block exceeds {} rows", lattice.height)));
        }
    }
    if rows > 0 {
        if rows != lattice.height {
            return Err(perr(text.lines().count(), format!("last block has {rows} rows")));
        }
        blocks.push(current);
    }
    if blocks.len() != count {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("{} snapshots, manifest declares {count}", blocks.len()),
        });
    }
    blocks.into_iter().map(|b| Snapshot::new(lattice, b)).collect()
}

/// Writes `manifest.json` and one data file per set into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset, provenance: Option<Provenance>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, set) in dataset.sets().iter().enumerate() {
        let name = format!("set_{i:04}.txt");
        write_text(&dir.join(&name), &format_snapshots(set.snapshots()))?;
        let l = set.lattice();
        let g = dataset.grid().map(|g| g[i]);
        entries.push(ManifestEntry {
            delta_over_omega: set.point().delta_over_omega,
            rb_over_a: set.point().rb_over_a,
            lattice: [l.height, l.width],
            count: set.len(),
            data_file: name,
            row: g.map(|g| g.row),
            col: g.map(|g| g.col),
        });
    }
    let path = dir.join("manifest.json");
    write_json(&path, &Manifest { provenance, sets: entries })?;
    Ok(path)
}

pub fn read_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.sets.is_empty() {
        return Err(Error::Parse {
            path: manifest_path.to_path_buf(),
            message: "manifest lists no sets".into(),
        });
    }
    let mut sets = Vec::with_capacity(manifest.sets.len());
    for e in &manifest.sets {
        let path = base.join(&e.data_file);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let lattice = Lattice::new(e.lattice[0], e.lattice[1])?;
        let snaps = parse_snapshots(&text, lattice, e.count, &path)?;
        sets.push(SnapshotSet::new(ParameterPoint::new(e.delta_over_omega, e.rb_over_a)?, snaps)?);
    }
    let dataset = Dataset::new(sets)?;
    let grid: Option<Vec<GridIndex>> = manifest
        .sets
        .iter()
        .map(|e| Some(GridIndex { row: e.row?, col: e.col? }))
        .collect();
    match grid {
        Some(g) => dataset.with_grid(g),
        None => Ok(dataset),
    }
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth, provenance: Option<Provenance>) -> Result<()> {
    write_json(
        path,
        &GroundTruthFile {
            provenance,
            phases: truth.clone(),
        },
    )
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    Ok(read_json::<GroundTruthFile>(path)?.phases)
}

/// CSV text: optional provenance line, header, then rows.
pub fn csv(provenance: Option<&Provenance>, header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    if let Some(p) = provenance {
        let _ = writeln!(out, "{}", p.csv_line());
    }
    let _ = writeln!(out, "{header}");
    for r in rows {
        let _ = writeln!(out, "{r}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ParameterPoint;

    fn small_dataset() -> Dataset {
        let l = Lattice::new(2, 3).unwrap();
        let s1 = Snapshot::new(l, vec![1, 0, 1, 0, 0, 1]).unwrap();
        let s2 = Snapshot::new(l, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let a = SnapshotSet::new(ParameterPoint::new(0.5, 1.2).unwrap(), vec![s1.clone(), s2]).unwrap();
        let b = SnapshotSet::new(ParameterPoint::new(-1.0, 1.5).unwrap(), vec![s1]).unwrap();
        Dataset::new(vec![a, b])
            .unwrap()
            .with_grid(vec![GridIndex { row: 0, col: 0 }, GridIndex { row: 0, col: 1 }])
            .unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset();
        let path = write_dataset(dir.path(), &ds, None).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
        let text = fs::read_to_string(dir.path().join("set_0000.txt")).unwrap();
        assert_eq!(text, "101\n001\n\n000\n111\n");
    }

    #[test]
    fn parser_rejects_bad_input() {
        let l = Lattice::new(2, 2).unwrap();
        let p = Path::new("x.txt");
        assert!(parse_snapshots("10\n01\n", l, 1, p).is_ok());
        assert!(parse_snapshots("10\n02\n", l, 1, p).is_err());
        assert!(parse_snapshots("10\n0 \n", l, 1, p).is_err());
        assert!(parse_snapshots("10\n01\r\n", l, 1, p).is_err());
        assert!(parse_snapshots("10\n011\n", l, 1, p).is_err());
        assert!(parse_snapshots("10\n01\n10\n", l, 1, p).is_err());
        assert!(parse_snapshots("10\n01\n", l, 2, p).is_err());
        assert!(parse_snapshots("10\n\n01\n", l, 2, p).is_err());
    }

    #[test]
    fn provenance_line() {
        let p = Provenance {
            tool: "t".into(),
            version: "1".into(),
            config_hash: "ab".into(),
            seed: 3,
        };
        assert_eq!(csv(Some(&p), "a,b", vec!["1,2".to_string()]), "# tool=t version=1 config_hash=ab seed=3\na,b\n1,2\n");
    }
}
