use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ccnn_core::ccnn::{Checkpoint, CcnnModel, WeightMode};
use ccnn_core::data::{Dataset, GridIndex};
use ccnn_core::datagen::{generate_dataset, point_key, GenerationPlan, GroundTruth};
use ccnn_core::interpret::{
    bulk_mask, confidence_map, connected_two_point, edge_mask, fourier_order_parameter, phase_diagram,
    sign_decomposition, three_point_correlator, ConfidenceMap,
};
use ccnn_core::io::{csv, read_dataset, read_ground_truth, write_dataset, write_ground_truth, write_json, write_text, Provenance};
use ccnn_core::spectral::{mean_power_spectrum, SpectralGrid};
use ccnn_core::training::{self, ablation_suite, format_ablation_table, LabeledPool, Variant};
use ccnn_core::unsupervised::{bic, cluster_phase_diagram, purity, ClusterOptions};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::{load_config, CliError, Common};

type CmdResult = Result<(), CliError>;

fn provenance(cfg: &PipelineConfig) -> Provenance {
    Provenance {
        tool: "hccnn".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }
}

/// JSON document with a provenance record next to the payload.
fn write_record<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> CmdResult {
    write_json(path, &json!({ "provenance": prov, "data": body }))?;
    Ok(())
}

fn write_csv(path: &Path, prov: &Provenance, header: &str, rows: Vec<String>) -> CmdResult {
    write_text(path, &csv(Some(prov), header, rows))?;
    Ok(())
}

/// `K` comma-separated rows of `K` values.
fn grid_rows(grid: &SpectralGrid) -> Vec<String> {
    (0..grid.k())
        .map(|a| (0..grid.k()).map(|b| grid.get(a, b).to_string()).collect::<Vec<_>>().join(","))
        .collect()
}

fn grid_header(k: usize) -> String {
    (0..k).map(|b| format!("ky{b}")).collect::<Vec<_>>().join(",")
}

fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset, CliError> {
    Ok(read_dataset(&cfg.manifest_path())?)
}

fn load_truth(cfg: &PipelineConfig) -> Result<Option<GroundTruth>, CliError> {
    cfg.ground_truth_path().map(|p| read_ground_truth(&p)).transpose().map_err(CliError::from)
}

fn truth_labels<'a>(dataset: &Dataset, truth: &'a GroundTruth) -> Result<Vec<&'a str>, CliError> {
    dataset
        .sets()
        .iter()
        .map(|s| {
            let key = point_key(&s.point());
            truth.get(&key).map(String::as_str).ok_or_else(|| {
                CliError::Core(ccnn_core::Error::InvalidArgument(format!("ground truth has no entry for point {key}")))
            })
        })
        .collect()
}

fn grid_cell(dataset: &Dataset, i: usize) -> (String, String) {
    match dataset.grid() {
        Some(g) => (g[i].row.to_string(), g[i].col.to_string()),
        None => (String::new(), String::new()),
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Generation plan (JSON); overrides the config's plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Bit-flip probability for the built-in plan.
    #[arg(long)]
    p_flip: Option<f64>,
}

pub fn generate(args: GenerateArgs) -> CmdResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(p) = &args.plan {
        cfg.generation = Some(ccnn_core::io::read_json(p)?);
    }
    if let Some(p) = args.p_flip {
        cfg.p_flip = p;
    }
    let plan = match &cfg.generation {
        Some(p) => GenerationPlan { seed: cfg.seed, ..p.clone() },
        None => GenerationPlan::default_grid(cfg.seed, cfg.p_flip),
    };
    let prov = provenance(&cfg);
    let (dataset, truth) = generate_dataset(&plan)?;
    let dir = cfg.output_dir.join("dataset");
    let manifest = write_dataset(&dir, &dataset, Some(prov.clone()))?;
    write_ground_truth(&dir.join("ground_truth.json"), &truth, Some(prov))?;
    println!("wrote {} sets to {}", dataset.len(), manifest.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SpectraArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fourier grid size.
    #[arg(long)]
    k: Option<usize>,
}

pub fn spectra(args: SpectraArgs) -> CmdResult {
    let mut cfg = load_config(&args.common)?;
    cfg.manifest = args.manifest.or(cfg.manifest);
    cfg.spectral_k = args.k.unwrap_or(cfg.spectral_k);
    let dataset = load_dataset(&cfg)?;
    let prov = provenance(&cfg);
    let dir = cfg.output_dir.join("spectra");
    for (i, set) in dataset.sets().iter().enumerate() {
        let grid = mean_power_spectrum(set, cfg.spectral_k)?;
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).expect("write to memory");
        let body = String::from_utf8(buf).expect("ascii csv");
        write_text(&dir.join(format!("set_{i:04}.csv")), &format!("{}\n{body}", prov.csv_line()))?;
    }
    println!("wrote {} spectra to {}", dataset.len(), dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct UnsupervisedArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_pca: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    /// Consecutive non-improving restarts before the search stops.
    #[arg(long)]
    patience: Option<usize>,
}

pub fn unsupervised(args: UnsupervisedArgs) -> CmdResult {
    let mut cfg = load_config(&args.common)?;
    cfg.manifest = args.manifest.or(cfg.manifest);
    cfg.ground_truth = args.ground_truth.or(cfg.ground_truth);
    cfg.spectral_k = args.k.unwrap_or(cfg.spectral_k);
    cfg.n_pca = args.n_pca.unwrap_or(cfg.n_pca);
    cfg.k_clusters = args.clusters.unwrap_or(cfg.k_clusters);
    cfg.patience = args.patience.unwrap_or(cfg.patience);
    let dataset = load_dataset(&cfg)?;
    let opts = ClusterOptions {
        k_spectral: cfg.spectral_k,
        n_pca: cfg.n_pca,
        k_clusters: cfg.k_clusters,
        seed: cfg.seed,
        patience: cfg.patience,
        ..ClusterOptions::default()
    };
    let result = cluster_phase_diagram(&dataset, &opts)?;
    let prov = provenance(&cfg);
    let dir = cfg.output_dir.join("unsupervised");
    let n_pc = result.projections.first().map_or(0, Vec::len);

    if let Some(pca) = &result.pca {
        for (c, comp) in pca.components.iter().enumerate() {
            let grid = SpectralGrid::new(cfg.spectral_k, comp.clone())?;
            write_csv(&dir.join(format!("pc_{:02}.csv", c + 1)), &prov, &grid_header(grid.k()), grid_rows(&grid))?;
        }
    }
    let pcs: Vec<String> = (1..=n_pc).map(|c| format!("pc{c}")).collect();
    let header = format!("row,col,delta,rb,{},label", pcs.join(","));
    let rows = dataset
        .sets()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (r, c) = grid_cell(&dataset, i);
            let p = s.point();
            let proj: Vec<String> = result.projections[i].iter().map(f64::to_string).collect();
            let mut line = format!("{r},{c},{},{}", p.delta_over_omega, p.rb_over_a);
            for v in proj {
                let _ = write!(line, ",{v}");
            }
            let _ = write!(line, ",{}", result.assignment.labels[i]);
            line
        })
        .collect();
    write_csv(&dir.join("projections.csv"), &prov, &header, rows)?;

    // one parameter-grid image per principal component
    if let Some(grid) = dataset.grid() {
        let rows_n = grid.iter().map(|g| g.row).max().unwrap_or(0) + 1;
        let cols_n = grid.iter().map(|g| g.col).max().unwrap_or(0) + 1;
        let header = (0..cols_n).map(|c| format!("col{c}")).collect::<Vec<_>>().join(",");
        for c in 0..n_pc {
            let mut cells = vec![vec![String::new(); cols_n]; rows_n];
            for (i, GridIndex { row, col }) in grid.iter().enumerate() {
                cells[*row][*col] = result.projections[i][c].to_string();
            }
            let rows = cells.into_iter().map(|r| r.join(",")).collect();
            write_csv(&dir.join(format!("projection_grid_pc{:02}.csv", c + 1)), &prov, &header, rows)?;
        }
    }

    let mut summary = json!({
        "n_sets": dataset.len(),
        "n_pca": n_pc,
        "k_clusters": cfg.k_clusters,
        "restart_attempts": result.attempts,
        "explained_variance": result.pca.as_ref().map(|p| p.explained_variance.clone()),
    });
    if let Some(g) = &result.gmm {
        summary["log_likelihood"] = json!(g.log_likelihood);
        summary["bic"] = json!(bic(g, dataset.len()));
    }
    if let Some(truth) = load_truth(&cfg)? {
        let p = purity(&result.assignment.labels, &truth_labels(&dataset, &truth)?)?;
        summary["purity"] = json!(p);
        println!("cluster purity {p:.4}");
    }
    write_record(&dir.join("summary.json"), &prov, &summary)?;
    println!("clustered {} sets into {} groups; outputs in {}", dataset.len(), cfg.k_clusters, dir.display());
    Ok(())
}

#[derive(Args, Debug, Clone, Default)]
pub struct ArchFlags {
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=3))]
    order: Option<u64>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    filter_size: Option<usize>,
    /// Fixed uniform spatial weighting instead of a learned map.
    #[arg(long)]
    uniform_w: bool,
    #[arg(long)]
    nonneg_beta: bool,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl ArchFlags {
    fn apply(&self, cfg: &mut PipelineConfig, phase: &str) {
        let mut a = cfg.architecture(phase);
        if let Some(o) = self.order {
            a.order = o as usize;
        }
        if let Some(f) = self.filters {
            a.n_filters = f;
        }
        if let Some(f) = self.filter_size {
            a.filter_size = f;
        }
        if self.uniform_w {
            a.weight_mode = WeightMode::Uniform;
        }
        if self.nonneg_beta {
            a.nonneg_beta = true;
        }
        if let Some(g) = self.gamma {
            a.gamma = g;
        }
        if let Some(e) = self.epochs {
            cfg.training.epochs = e;
        }
        cfg.phases.insert(phase.to_string(), a);
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    phase: String,
    #[command(flatten)]
    arch: ArchFlags,
    /// Dataset holding the training points.
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    /// Phase name → list of [delta, rb] pairs (JSON).
    #[arg(long)]
    training_points: Option<PathBuf>,
    #[arg(long)]
    out_checkpoint: Option<PathBuf>,
}

fn training_pool(cfg: &PipelineConfig, phase: &str) -> Result<(Dataset, LabeledPool), CliError> {
    let points = cfg.training_points();
    if !points.contains_key(phase) {
        return Err(CliError::Usage(format!("no training points for phase '{phase}'")));
    }
    let dataset = load_dataset(cfg)?;
    let pool = LabeledPool::from_dataset(&dataset, &points, phase)?;
    Ok((dataset, pool))
}

fn square_side(dataset: &Dataset) -> Result<usize, CliError> {
    let l = dataset.sets()[0].lattice();
    if !l.is_square() {
        return Err(CliError::Core(ccnn_core::Error::InvalidArgument(format!(
            "classifiers need square lattices, got {}x{}",
            l.height, l.width
        ))));
    }
    Ok(l.height)
}

pub fn train(args: TrainArgs) -> CmdResult {
    let mut cfg = load_config(&args.common)?;
    cfg.manifest = args.train_manifest.or(cfg.manifest);
    if let Some(p) = &args.training_points {
        cfg.training_points = Some(ccnn_core::io::read_json(p)?);
    }
    args.arch.apply(&mut cfg, &args.phase);
    let (dataset, pool) = training_pool(&cfg, &args.phase)?;
    let tc = cfg.train_config(&args.phase, square_side(&dataset)?)?;
    let (model, report) = training::train(&pool, &tc)?;
    let prov = provenance(&cfg);
    let path = args
        .out_checkpoint
        .unwrap_or_else(|| cfg.output_dir.join("models").join(format!("{}.json", args.phase)));
    let mut meta = BTreeMap::new();
    meta.insert("phase".to_string(), json!(args.phase));
    meta.insert("provenance".to_string(), json!(prov));
    meta.insert("train_config".to_string(), json!(tc));
    meta.insert("final_val_accuracy".to_string(), json!(report.final_val_accuracy));
    Checkpoint::from_model(&model, meta).save(&path)?;
    let rows = (0..report.loss.len())
        .map(|e| format!("{},{},{},{}", e + 1, report.loss[e], report.val_accuracy[e], report.learning_rate[e]))
        .collect();
    write_csv(&path.with_extension("report.csv"), &prov, "epoch,loss,val_accuracy,learning_rate", rows)?;
    match report.final_val_accuracy {
        Some(a) => println!("{}: validation accuracy {a:.4}; checkpoint {}", args.phase, path.display()),
        None => println!("{}: checkpoint {}", args.phase, path.display()),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct InterpretArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Trained model; repeat for several phases.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Fourier grid size for order-parameter maps (default: at least 16
    /// and at least the correlator map size).
    #[arg(long)]
    k: Option<usize>,
    /// Three-point motif as `r,c;r,c;r,c`.
    #[arg(long, value_parser = parse_offsets)]
    offsets: Option<[(i64, i64); 3]>,
    /// Two-point displacement `r,c` measured on edge and bulk masks.
    #[arg(long, value_parser = parse_pair)]
    displacement: Option<(i64, i64)>,
}

fn parse_pair(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected r,c but got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<i64>().map_err(|e| format!("'{v}': {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_offsets(s: &str) -> Result<[(i64, i64); 3], String> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != 3 {
        return Err(format!("expected three offsets, got {}", parts.len()));
    }
    Ok([parse_pair(parts[0])?, parse_pair(parts[1])?, parse_pair(parts[2])?])
}

fn phase_name(ckpt: &Checkpoint, path: &Path) -> String {
    match ckpt.metadata.get("phase").and_then(|v| v.as_str()) {
        Some(p) => p.to_string(),
        None => path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned()),
    }
}

pub fn interpret(args: InterpretArgs) -> CmdResult {
    let mut cfg = load_config(&args.common)?;
    cfg.manifest = args.manifest.or(cfg.manifest);
    cfg.ground_truth = args.ground_truth.or(cfg.ground_truth);
    cfg.threshold = args.threshold.unwrap_or(cfg.threshold);
    cfg.fourier_k = args.k.unwrap_or(cfg.fourier_k);
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(CliError::Usage(format!("threshold {} outside (0, 1)", cfg.threshold)));
    }
    let dataset = load_dataset(&cfg)?;
    let side = square_side(&dataset)?;
    let prov = provenance(&cfg);
    let dir = cfg.output_dir.join("interpret");

    let mut models: Vec<(String, CcnnModel)> = Vec::new();
    for path in &args.checkpoints {
        let ckpt = Checkpoint::load(path)?;
        let name = phase_name(&ckpt, path);
        if ckpt.config.lattice != side {
            return Err(CliError::Core(ccnn_core::Error::InvalidArgument(format!(
                "checkpoint {} expects {}x{} lattices, dataset has {side}x{side}",
                path.display(),
                ckpt.config.lattice,
                ckpt.config.lattice
            ))));
        }
        if models.iter().any(|(n, _)| *n == name) {
            return Err(CliError::Usage(format!("two checkpoints for phase '{name}'")));
        }
        models.push((name, ckpt.to_model()?));
    }

    let mut maps: Vec<(String, ConfidenceMap)> = Vec::new();
    let mut rows = Vec::new();
    for (name, model) in &models {
        let m = confidence_map(model, &dataset)?;
        for (p, y) in m.points.iter().zip(&m.values) {
            rows.push(format!("{},{},{name},{y}", p.delta_over_omega, p.rb_over_a));
        }
        maps.push((name.clone(), m));
    }
    write_csv(&dir.join("confidence_maps.csv"), &prov, "delta,rb,phase,yhat", rows)?;

    let diagram = phase_diagram(&maps, cfg.threshold)?;
    let rows = diagram
        .points
        .iter()
        .zip(&diagram.labels)
        .enumerate()
        .map(|(i, (p, labels))| {
            let label = if labels.is_empty() { "unassigned".to_string() } else { labels.join(";") };
            let best = maps
                .iter()
                .map(|(_, m)| m.values[i])
                .fold(f64::NEG_INFINITY, f64::max);
            format!("{},{},{label},{best}", p.delta_over_omega, p.rb_over_a)
        })
        .collect();
    write_csv(&dir.join("phase_diagram.csv"), &prov, "delta,rb,phase,yhat", rows)?;

    let mut summary = json!({ "threshold": cfg.threshold, "phases": models.iter().map(|(n, _)| n).collect::<Vec<_>>() });
    if let Some(truth) = load_truth(&cfg)? {
        let t = truth_labels(&dataset, &truth)?;
        let agree = diagram
            .labels
            .iter()
            .zip(&t)
            .filter(|(l, t)| l.len() == 1 && l[0] == **t)
            .count() as f64
            / t.len() as f64;
        summary["ground_truth_agreement"] = json!(agree);
        println!("phase diagram agrees with ground truth on {:.1}% of points", 100.0 * agree);
    }

    for (name, model) in &models {
        let c = model.config();
        if c.order != 2 || c.weight_mode != WeightMode::Uniform {
            continue;
        }
        let k = if cfg.fourier_k == 0 { c.map_size().max(16) } else { cfg.fourier_k };
        let op = fourier_order_parameter(model, k)?;
        write_csv(&dir.join(format!("fourier_{name}.csv")), &prov, &grid_header(k), grid_rows(&op.weights))?;
        summary["fourier_bias"][name] = json!(op.bias);
    }

    if let Some(offsets) = args.offsets {
        let records = dataset
            .sets()
            .iter()
            .map(|s| {
                let d = sign_decomposition(s, offsets)?;
                let p = s.point();
                Ok(json!({
                    "delta": p.delta_over_omega,
                    "rb": p.rb_over_a,
                    "offsets": offsets,
                    "correlator": three_point_correlator(s, offsets)?,
                    "decomposition": d,
                }))
            })
            .collect::<Result<Vec<_>, ccnn_core::Error>>()?;
        write_record(&dir.join("sign_decomposition.json"), &prov, &records)?;
    }

    if let Some(d) = args.displacement {
        let l = dataset.sets()[0].lattice();
        let (edge, bulk) = (edge_mask(l), bulk_mask(l));
        let rows = dataset
            .sets()
            .iter()
            .map(|s| {
                let p = s.point();
                Ok(format!(
                    "{},{},{},{}",
                    p.delta_over_omega,
                    p.rb_over_a,
                    connected_two_point(s, d, &edge)?,
                    connected_two_point(s, d, &bulk)?
                ))
            })
            .collect::<Result<Vec<_>, ccnn_core::Error>>()?;
        write_csv(&dir.join("two_point.csv"), &prov, "delta,rb,edge,bulk", rows)?;
    }

    write_record(&dir.join("summary.json"), &prov, &summary)?;
    println!("interpreted {} models on {} sets; outputs in {}", models.len(), dataset.len(), dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    phase: String,
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    training_points: Option<PathBuf>,
    /// Variants to compare (JSON list); the order × weighting grid when absent.
    #[arg(long)]
    variants: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    epochs: Option<usize>,
}

fn default_variants(gamma: f64, filter_size: usize) -> Vec<Variant> {
    let mut v = Vec::new();
    for order in [2, 3] {
        for weight_mode in [WeightMode::Uniform, WeightMode::Learned] {
            v.push(Variant {
                order,
                weight_mode,
                filter_size,
                nonneg_beta: false,
                gamma,
            });
        }
    }
    v
}

pub fn ablate(args: AblateArgs) -> CmdResult {
    let mut cfg = load_config(&args.common)?;
    cfg.manifest = args.train_manifest.or(cfg.manifest);
    if let Some(p) = &args.training_points {
        cfg.training_points = Some(ccnn_core::io::read_json(p)?);
    }
    if let Some(e) = args.epochs {
        cfg.training.epochs = e;
    }
    if args.folds < 2 || args.seeds == 0 {
        return Err(CliError::Usage("ablation needs at least 2 folds and 1 seed".into()));
    }
    let arch = cfg.architecture(&args.phase);
    let variants: Vec<Variant> = match &args.variants {
        Some(p) => ccnn_core::io::read_json(p)?,
        None => default_variants(arch.gamma, arch.filter_size),
    };
    for v in &variants {
        if !(2..=3).contains(&v.order) {
            return Err(CliError::Usage(format!("variant order must be 2 or 3, got {}", v.order)));
        }
    }
    let (dataset, pool) = training_pool(&cfg, &args.phase)?;
    let base = cfg.train_config(&args.phase, square_side(&dataset)?)?;
    let rows = ablation_suite(&pool, &base, &variants, args.folds, args.seeds)?;
    let prov = provenance(&cfg);
    let dir = cfg.output_dir.join("ablation");
    let csv_rows = rows
        .iter()
        .map(|r| {
            let v = &r.variant;
            let w = match v.weight_mode {
                WeightMode::Uniform => "uniform",
                WeightMode::Learned => "learned",
            };
            format!(
                "{},{w},{},{},{},{},{}",
                v.order, v.filter_size, v.nonneg_beta, v.gamma, r.report.mean, r.report.stderr
            )
        })
        .collect();
    write_csv(
        &dir.join(format!("{}.csv", args.phase)),
        &prov,
        "order,weight,filter_size,nonneg_beta,gamma,mean_accuracy,stderr",
        csv_rows,
    )?;
    write_record(&dir.join(format!("{}.json", args.phase)), &prov, &rows)?;
    print!("{}", format_ablation_table(&rows));
    Ok(())
}
