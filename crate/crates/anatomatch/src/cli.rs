//! Command-line interface: reproducible experiments over files on disk.
//!
//! Every command is a pure function of (config, seed, input files); outputs
//! are byte-identical across runs and worker counts. Exit codes: 0 success,
//! 2 usage, 3 validation, 4 I/O, 5 numerical failure. The `ANATOMATCH_SEED`
//! environment variable overrides config/flag seeds for smoke testing.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{run_ablation, CorruptionConfig, ExperimentConfig};
use crate::fixedpoint::{match_point, MatchMode, MatcherConfig};
use crate::geom::{PhysPoint, VoxelPoint};
use crate::io;
use crate::metrics::{render_summary_table, summarize, EvalRecord};
use crate::phantom::{
    augment, corrupt_intensity, generate_phantom, sample_augment_params, sample_correspondences,
    AugmentConfig, CorruptMode, CorruptRegion, CorrespondenceSet, PhantomConfig,
};
use crate::trainer::LossRecord;
use crate::verify::{run_loss_checks, LossCheckConfig};

/// Top-level configuration document consumed by `ablation` and `train-toy`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub matcher: MatcherConfig,
    pub trainer: crate::trainer::TrainConfig,
    pub experiment: ExperimentSettings,
}

impl Default for RunConfig {
    /// Field defaults mirror [`ExperimentConfig::default`], so a config file
    /// of just `{"seed": N}` reproduces the library's default experiment.
    fn default() -> Self {
        let d = ExperimentConfig::default();
        RunConfig {
            seed: d.seed,
            matcher: d.matcher.clone(),
            trainer: d.trainer.clone(),
            experiment: ExperimentSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub correspondences_per_pair: usize,
    pub phantom: PhantomConfig,
    pub augment: AugmentConfig,
    pub corruption: CorruptionConfig,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        ExperimentSettings {
            train_pairs: d.train_pairs,
            eval_pairs: d.eval_pairs,
            correspondences_per_pair: d.correspondences_per_pair,
            phantom: d.phantom,
            augment: d.augment,
            corruption: d.corruption,
        }
    }
}

impl RunConfig {
    pub fn to_experiment(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            train_pairs: self.experiment.train_pairs,
            eval_pairs: self.experiment.eval_pairs,
            correspondences_per_pair: self.experiment.correspondences_per_pair,
            phantom: self.experiment.phantom.clone(),
            augment: self.experiment.augment.clone(),
            corruption: self.experiment.corruption.clone(),
            trainer: self.trainer.clone(),
            matcher: self.matcher.clone(),
        }
    }
}

fn parse_voxel_point(s: &str) -> std::result::Result<VoxelPoint, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected z,y,x (three comma-separated integers), got {s:?}"));
    }
    let mut vals = [0i64; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse::<i64>()
            .map_err(|e| format!("bad coordinate {p:?}: {e}"))?;
    }
    Ok(VoxelPoint::new(vals[0], vals[1], vals[2]))
}

fn parse_triple_f64(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected z,y,x (three comma-separated numbers), got {s:?}"));
    }
    let mut vals = [0f64; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad value {p:?}: {e}"))?;
    }
    Ok(vals)
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let v = parse_triple_f64(s)?;
    if v.iter().any(|&x| x < 1.0 || x.fract() != 0.0) {
        return Err(format!("dims must be positive integers, got {s:?}"));
    }
    Ok([v[0] as usize, v[1] as usize, v[2] as usize])
}

#[derive(Parser, Debug)]
#[command(name = "anatomatch", version, about = "Dense volumetric embedding correspondence toolkit")]
pub struct Cli {
    /// Cap worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate phantoms, augmented pairs, and corruptions.
    Phantom {
        #[command(subcommand)]
        action: PhantomCmd,
    },
    /// Match one template point into a query volume.
    Match(MatchArgs),
    /// Score predictions against ground-truth correspondences.
    Eval(EvalArgs),
    /// Train heads and compare the four matcher configurations.
    Ablation(AblationArgs),
    /// Run the gradient/identity/complexity self-checks.
    LossCheck(LossCheckArgs),
    /// Train the toy embedder and write head weights plus loss history.
    TrainToy(TrainToyArgs),
}

#[derive(Subcommand, Debug)]
pub enum PhantomCmd {
    /// Write one phantom: intensity (AEV), labels (ALV), manifest.
    Gen(PhantomGenArgs),
    /// Write an augmented pair with exact correspondences.
    Pair(PhantomPairArgs),
    /// Apply a corruption to an intensity volume.
    Corrupt(PhantomCorruptArgs),
}

#[derive(Args, Debug)]
pub struct PhantomGenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_dims, default_value = "64,64,64")]
    pub dims: [usize; 3],
    #[arg(long, default_value_t = 2.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 6)]
    pub classes: u16,
    #[arg(long, default_value_t = 10)]
    pub structures: usize,
    /// Output directory (created if missing; parent must exist).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PhantomPairArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_dims, default_value = "64,64,64")]
    pub dims: [usize; 3],
    #[arg(long, default_value_t = 2.0)]
    pub spacing: f64,
    #[arg(long, default_value_t = 6)]
    pub classes: u16,
    #[arg(long, default_value_t = 10)]
    pub structures: usize,
    #[arg(long, default_value_t = 24)]
    pub correspondences: usize,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    #[arg(long, default_value_t = 15.0)]
    pub max_rotation: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub blur: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PhantomCorruptArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// erase-structure | intensity-shift | local-deform
    #[arg(long)]
    pub mode: String,
    /// Region center in voxel coordinates z,y,x.
    #[arg(long, value_parser = parse_voxel_point)]
    pub center: VoxelPoint,
    #[arg(long)]
    pub radius_mm: f64,
    #[arg(long, default_value_t = 1.5)]
    pub gain: f64,
    /// Displacement in mm (local-deform only), z,y,x.
    #[arg(long, value_parser = parse_triple_f64, default_value = "3,0,0")]
    pub displacement: [f64; 3],
    /// Truth/correspondence JSON to rewrite (local-deform only).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the updated truth JSON (defaults next to --out).
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    /// Template point in voxel coordinates z,y,x.
    #[arg(long, value_parser = parse_voxel_point)]
    pub point: VoxelPoint,
    /// nn | fixedpoint
    #[arg(long, default_value = "fixedpoint")]
    pub mode: String,
    #[arg(long, default_value_t = 5)]
    pub cube: usize,
    #[arg(long, default_value_t = 2.0)]
    pub tau_dis: f64,
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 4)]
    pub min_points: usize,
    /// Include per-trace diagnostics in the output.
    #[arg(long)]
    pub traces: bool,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Write summary JSON here (table always prints to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblationArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LossCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub batches: usize,
    /// Emit the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct TrainToyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Applies the `ANATOMATCH_SEED` override.
fn effective_seed(configured: u64) -> Result<u64> {
    match std::env::var("ANATOMATCH_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|e| Error::Usage(format!("ANATOMATCH_SEED must be a u64: {e}"))),
        Err(_) => Ok(configured),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    if path.exists() {
        if !path.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} exists and is not a directory", path.display()),
            )));
        }
        return Ok(());
    }
    // only create the leaf; a missing parent is an I/O error
    match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() && !parent.exists() => {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("output parent {} does not exist", parent.display()),
            )));
        }
        _ => {}
    }
    fs::create_dir(path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::InvalidArgument(format!("malformed JSON in {}: {e}", path.display()))
    })
}

#[derive(Serialize)]
struct PhantomManifest<'a> {
    seed: u64,
    dims: [usize; 3],
    spacing_mm: f64,
    num_classes: u16,
    n_structures: usize,
    structures: &'a [crate::phantom::Structure],
    files: Vec<String>,
}

fn cmd_phantom_gen(args: &PhantomGenArgs) -> Result<()> {
    let seed = effective_seed(args.seed)?;
    let cfg = PhantomConfig {
        dims: args.dims,
        spacing_mm: args.spacing,
        num_classes: args.classes,
        n_structures: args.structures,
    };
    let phantom = generate_phantom(&cfg, seed)?;
    ensure_dir(&args.out)?;
    io::write_embedding(&phantom.intensity, args.out.join("intensity.aev"))?;
    io::write_label(&phantom.labels, args.out.join("labels.alv"))?;
    let manifest = PhantomManifest {
        seed,
        dims: cfg.dims,
        spacing_mm: cfg.spacing_mm,
        num_classes: cfg.num_classes,
        n_structures: cfg.n_structures,
        structures: &phantom.structures,
        files: vec!["intensity.aev".into(), "labels.alv".into()],
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "phantom seed={seed} dims={:?} structures={} -> {}",
        cfg.dims,
        phantom.structures.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PairManifest {
    seed: u64,
    dims: [usize; 3],
    spacing_mm: f64,
    params: crate::phantom::AugmentParams,
    transform: crate::phantom::TransformSummary,
    files: Vec<String>,
}

fn cmd_phantom_pair(args: &PhantomPairArgs) -> Result<()> {
    let seed = effective_seed(args.seed)?;
    let cfg = PhantomConfig {
        dims: args.dims,
        spacing_mm: args.spacing,
        num_classes: args.classes,
        n_structures: args.structures,
    };
    let aug = AugmentConfig {
        max_rotation_deg: args.max_rotation,
        overlap_frac: args.overlap,
        noise_sigma: args.noise,
        blur_sigma_vox: args.blur,
        ..AugmentConfig::default()
    };
    aug.validate()?;
    let phantom = generate_phantom(&cfg, seed)?;
    let extent = [
        (cfg.dims[0] - 1) as f64 * cfg.spacing_mm,
        (cfg.dims[1] - 1) as f64 * cfg.spacing_mm,
        (cfg.dims[2] - 1) as f64 * cfg.spacing_mm,
    ];
    let params = sample_augment_params(&aug, extent, seed ^ 0xC0FFEE)?;
    let pair = augment(&phantom, &params)?;
    let corrs = sample_correspondences(&pair, args.correspondences, seed ^ 0xBEEF)?;
    ensure_dir(&args.out)?;
    io::write_embedding(&pair.view_a.intensity, args.out.join("a_intensity.aev"))?;
    io::write_label(&pair.view_a.labels, args.out.join("a_labels.alv"))?;
    io::write_embedding(&pair.view_b.intensity, args.out.join("b_intensity.aev"))?;
    io::write_label(&pair.view_b.labels, args.out.join("b_labels.alv"))?;
    write_json(&args.out.join("correspondences.json"), &corrs)?;
    let manifest = PairManifest {
        seed,
        dims: cfg.dims,
        spacing_mm: cfg.spacing_mm,
        params: params.clone(),
        transform: corrs.transform.clone(),
        files: vec![
            "a_intensity.aev".into(),
            "a_labels.alv".into(),
            "b_intensity.aev".into(),
            "b_labels.alv".into(),
            "correspondences.json".into(),
        ],
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "pair seed={seed} rotation={:?} scale={:?} translation={:?} -> {}",
        params.rotation_deg,
        params.scale,
        params.translation_mm,
        args.out.display()
    );
    Ok(())
}

fn cmd_phantom_corrupt(args: &PhantomCorruptArgs) -> Result<()> {
    let seed = effective_seed(args.seed)?;
    let volume = io::read_embedding(&args.volume)?;
    let labels = io::read_label(&args.labels)?;
    let spacing = volume.spacing_mm();
    let center = args.center.to_phys(spacing);
    let region = CorruptRegion {
        center_mm: center,
        radius_mm: args.radius_mm,
    };
    match args.mode.as_str() {
        "erase-structure" => {
            let out = corrupt_intensity(&volume, &labels, &CorruptMode::EraseStructure, &region, seed)?;
            io::write_embedding(&out, &args.out)?;
        }
        "intensity-shift" => {
            let out = corrupt_intensity(
                &volume,
                &labels,
                &CorruptMode::IntensityShift { gain: args.gain },
                &region,
                seed,
            )?;
            io::write_embedding(&out, &args.out)?;
        }
        "local-deform" => {
            let truth_path = args.truth.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "local-deform rewrites ground truth; pass --truth correspondences.json".into(),
                )
            })?;
            let mut corrs: CorrespondenceSet = read_json(truth_path)?;
            let (deformed, deform, _labels) =
                crate::phantom::deform_volume(&volume, &labels, &region, args.displacement)?;
            io::write_embedding(&deformed, &args.out)?;
            for pair in corrs.pairs.iter_mut() {
                pair.truth_query = deform.pull_target(pair.truth_query);
            }
            let out_truth = args
                .out_truth
                .clone()
                .unwrap_or_else(|| args.out.with_extension("truth.json"));
            write_json(&out_truth, &corrs)?;
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown corrupt mode {other:?} (expected erase-structure, intensity-shift, local-deform)"
            )));
        }
    }
    println!("corrupted {} -> {}", args.volume.display(), args.out.display());
    Ok(())
}

fn cmd_match(args: &MatchArgs) -> Result<()> {
    let mode = match args.mode.as_str() {
        "nn" => MatchMode::Nn,
        "fixedpoint" => MatchMode::FixedPoint,
        other => {
            return Err(Error::Usage(format!(
                "unknown mode {other:?} (expected nn or fixedpoint)"
            )));
        }
    };
    let template = io::read_embedding(&args.template)?;
    let query = io::read_embedding(&args.query)?;
    let cfg = MatcherConfig {
        mode,
        cube_l: args.cube,
        tau_dis: args.tau_dis,
        max_iter: args.max_iter,
        min_points: args.min_points,
        collect_traces: args.traces,
        ..MatcherConfig::default()
    };
    let result = match_point(args.point, &template, &query, &cfg)?;
    let mut bytes = serde_json::to_vec_pretty(&result).expect("serializable");
    bytes.push(b'\n');
    match &args.out {
        Some(path) => fs::write(path, bytes)?,
        None => print!("{}", String::from_utf8(bytes).expect("utf8 json")),
    }
    Ok(())
}

/// Prediction file schema for `eval`: indices refer to the truth pair list.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionFile {
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub predicted_mm: PhysPoint,
    #[serde(default)]
    pub method: String,
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let preds: PredictionFile = read_json(&args.pred)?;
    let truth: CorrespondenceSet = read_json(&args.truth)?;
    if preds.predictions.len() != truth.pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction count {} does not match truth pair count {}",
            preds.predictions.len(),
            truth.pairs.len()
        )));
    }
    let mut seen = vec![false; truth.pairs.len()];
    let mut records = Vec::with_capacity(truth.pairs.len());
    for p in &preds.predictions {
        let pair = truth.pairs.get(p.index).ok_or_else(|| {
            Error::InvalidArgument(format!("prediction index {} out of range", p.index))
        })?;
        if seen[p.index] {
            return Err(Error::InvalidArgument(format!(
                "duplicate prediction for index {}",
                p.index
            )));
        }
        seen[p.index] = true;
        records.push(EvalRecord {
            pair_id: format!("{}#{}", pair.tag, p.index),
            predicted: p.predicted_mm,
            truth: pair.truth_query,
            radius_mm: pair.radius_mm,
            method: p.method.clone(),
        });
    }
    let summary = summarize(&records)?;
    let table = render_summary_table(&[("eval".to_string(), summary.clone())]);
    print!("{table}");
    if let Some(path) = &args.out {
        write_json(path, &summary)?;
    } else {
        println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    }
    Ok(())
}

fn cmd_ablation(args: &AblationArgs) -> Result<()> {
    let run: RunConfig = read_json(&args.config)?;
    let seed = effective_seed(run.seed)?;
    let cfg = run.to_experiment(seed);
    cfg.validate()?;
    ensure_dir(&args.out)?;
    let report = run_ablation(&cfg)?;
    write_json(&args.out.join("report.json"), &report)?;
    let text = report.render_text();
    fs::write(args.out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn cmd_loss_check(args: &LossCheckArgs) -> Result<()> {
    let seed = effective_seed(args.seed)?;
    let report = run_loss_checks(&LossCheckConfig {
        seed,
        batches: args.batches,
        ..LossCheckConfig::default()
    });
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        print!("{}", report.render_text());
    }
    if !report.all_passed {
        return Err(Error::NonFinite("loss checks failed".into()));
    }
    Ok(())
}

fn cmd_train_toy(args: &TrainToyArgs) -> Result<()> {
    let run: RunConfig = read_json(&args.config)?;
    let seed = effective_seed(run.seed)?;
    let cfg = run.to_experiment(seed);
    cfg.trainer.validate()?;
    cfg.augment.validate()?;
    ensure_dir(&args.out)?;
    let outcome = crate::experiment::train_heads(&cfg)?;
    io::write_head(&outcome.appearance, args.out.join("appearance.aph"))?;
    io::write_head(&outcome.semantic, args.out.join("semantic.aph"))?;
    let mut csv = String::from("step,appearance,semantic,total\n");
    for LossRecord {
        step,
        appearance,
        semantic,
        total,
    } in &outcome.history
    {
        csv.push_str(&format!("{step},{appearance},{semantic},{total}\n"));
    }
    fs::write(args.out.join("loss_history.csv"), csv.as_bytes())?;
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        println!(
            "trained {} steps: loss {} -> {}",
            outcome.history.len(),
            first.total,
            last.total
        );
    } else {
        println!("trained 0 steps: heads equal initialization");
    }
    Ok(())
}

/// Runs one parsed command; the binary maps errors to exit codes.
pub fn run(cli: Cli) -> Result<()> {
    let body = || -> Result<()> {
        match &cli.command {
            Command::Phantom { action } => match action {
                PhantomCmd::Gen(args) => cmd_phantom_gen(args),
                PhantomCmd::Pair(args) => cmd_phantom_pair(args),
                PhantomCmd::Corrupt(args) => cmd_phantom_corrupt(args),
            },
            Command::Match(args) => cmd_match(args),
            Command::Eval(args) => cmd_eval(args),
            Command::Ablation(args) => cmd_ablation(args),
            Command::LossCheck(args) => cmd_loss_check(args),
            Command::TrainToy(args) => cmd_train_toy(args),
        }
    };
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_parser_accepts_and_rejects() {
        assert_eq!(parse_voxel_point("1,2,3").unwrap(), VoxelPoint::new(1, 2, 3));
        assert_eq!(
            parse_voxel_point(" 4 , 5 , 6 ").unwrap(),
            VoxelPoint::new(4, 5, 6)
        );
        assert!(parse_voxel_point("1,2").is_err());
        assert!(parse_voxel_point("a,b,c").is_err());
        assert!(parse_voxel_point("1.5,2,3").is_err());
    }

    #[test]
    fn run_config_round_trips_and_defaults() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.experiment.eval_pairs, cfg.experiment.eval_pairs);
        // a partial document fills in defaults
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.matcher.cube_l, 5);
    }
}
