//! Command implementations for the `cornerpose` binary.
//!
//! Settings are resolved as: command-line flag, then run manifest, then
//! built-in default.

pub mod manifest;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cornerpose::estimator::{
    estimate, EstimatorConfig, InlierGate, InlierMatch, ObjectModel, ScoredPose, ScorerKind,
    DEFAULT_SCALE_FRACTION,
};
use cornerpose::geometry::{CameraIntrinsics, Pose};
use cornerpose::mesh::{
    extract_corners, parse_obj, parse_ply, CornerFrame, Mesh, DEFAULT_ORTHO_TOL,
    DEFAULT_SHARP_ANGLE_TOL,
};
use cornerpose::metrics::{aggregate, evaluate_pose, model_points, EvaluationRecord};
use cornerpose::render::{render_mask, Raster};
use cornerpose::sim::{generate_scenario, synthetic_edge_image, PermutationFlip, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use manifest::{ModelEntry, RunManifest};

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable/invalid input (exit code 2).
    Input(anyhow::Error),
    /// Anything that fails after the inputs were accepted (exit code 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self {
            CliError::Input(e) | CliError::Runtime(e) => e,
        };
        write!(f, "{e:#}")
    }
}

trait Classify<T> {
    fn input(self) -> Result<T, CliError>;
    fn runtime(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Input(e.into()))
    }
    fn runtime(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cornerpose",
    version,
    about = "Object pose estimation from detected 3D corners",
    after_help = "Settings given as flags override the run manifest (--manifest), which overrides built-in defaults."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find trihedral corners of a mesh and write their frames as JSON.
    ExtractCorners(ExtractArgs),
    /// Generate synthetic scenarios (JSON lines).
    Simulate(SimulateArgs),
    /// Estimate one pose per scenario (JSON lines, `null` when none).
    Estimate(EstimateArgs),
    /// Score estimated poses against scenario ground truth (CSV).
    Evaluate(EvaluateArgs),
    /// Render a model's edge image or silhouette at a pose (PGM).
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Mesh file (.obj or .ply).
    pub mesh: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Fold angle (rad) above which an edge is sharp.
    #[arg(long, default_value_t = DEFAULT_SHARP_ANGLE_TOL)]
    pub sharp_tol: f64,
    /// Allowed deviation (rad) of corner edges from orthogonality.
    #[arg(long, default_value_t = DEFAULT_ORTHO_TOL)]
    pub ortho_tol: f64,
}

/// Model selection shared by the batch commands.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Run manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Mesh file; replaces the manifest's model list.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Identifier for --model (default: file stem).
    #[arg(long)]
    pub model_id: Option<String>,
    /// Treat the --model object as rotationally symmetric (evaluate with ADI).
    #[arg(long)]
    pub symmetric: bool,
    /// Comma-separated corner indices to keep for --model.
    #[arg(long, value_delimiter = ',')]
    pub corners: Option<Vec<usize>>,
    /// Control-point scale as a fraction of the object diameter.
    #[arg(long)]
    pub scale_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Scenarios per model [default: 100].
    #[arg(long)]
    pub count: Option<usize>,
    /// Seed of the first scenario; scenario i uses seed + i [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fraction of detections that are corner-shaped outliers.
    #[arg(long)]
    pub outlier_rate: Option<f64>,
    /// Probability of missing a visible corner.
    #[arg(long)]
    pub miss_rate: Option<f64>,
    /// Extra detections made of random points.
    #[arg(long)]
    pub clutter: Option<usize>,
    /// Never relabel true detections with an ambiguity permutation.
    #[arg(long)]
    pub identity_only: bool,
    /// Intrinsics as JSON text or a JSON file [default: 640x480, f = 600].
    #[arg(long)]
    pub intrinsics: Option<String>,
    /// Output file (default: <output_dir>/scenarios.jsonl or stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Reprojection,
    #[value(name = "edge_ncc")]
    EdgeNcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    /// inliers > min-inliers
    Strict,
    /// inliers >= min-inliers
    AtLeast,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Scenario file (JSON lines).
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Inlier threshold in pixels.
    #[arg(long)]
    pub tau_px: Option<f64>,
    /// Inlier count threshold.
    #[arg(long)]
    pub min_inliers: Option<usize>,
    /// Comparison used with --min-inliers.
    #[arg(long, value_enum)]
    pub gate: Option<GateArg>,
    /// Hypothesis score.
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
    /// Random segments added to the synthetic edge image (edge_ncc only).
    #[arg(long)]
    pub edge_clutter: Option<usize>,
    /// Worker threads; 1 runs serially.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Output file (default: <output_dir>/poses.jsonl or stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Scenario file (JSON lines).
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Estimates written by `estimate`.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Seed for subsampling large meshes' metric points.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write ground-truth (gray) vs estimate (white) edge overlays here.
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Also write pose rates restricted to detected scenes.
    #[arg(long)]
    pub conditional: Option<PathBuf>,
    /// Worker threads; 1 runs serially.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Report file (default: <output_dir>/report.csv or stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Mesh file (.obj or .ply).
    pub mesh: PathBuf,
    /// Pose as JSON text (`{"R": [...], "t": [...]}`) or a JSON file.
    #[arg(long)]
    pub pose: String,
    /// Intrinsics as JSON text or a JSON file [default: 640x480, f = 600].
    #[arg(long)]
    pub intrinsics: Option<String>,
    /// Render the silhouette instead of the edges.
    #[arg(long)]
    pub mask: bool,
    /// Blur edges with a 3x3 binomial kernel.
    #[arg(long)]
    pub blur: bool,
    /// Output PGM file.
    #[arg(short, long)]
    pub output: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ExtractCorners(a) => cmd_extract_corners(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Render(a) => cmd_render(&a),
    }
}

/// Loads an OBJ or PLY mesh, chosen by extension.
pub fn load_mesh(path: &Path) -> anyhow::Result<Mesh> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mesh = match ext.as_deref() {
        Some("obj") => parse_obj(&bytes),
        Some("ply") => parse_ply(&bytes),
        _ => bail!(
            "{}: unsupported mesh format (expected .obj or .ply)",
            path.display()
        ),
    };
    mesh.with_context(|| format!("cannot parse {}", path.display()))
}

/// JSON text, or the path of a file holding it.
fn json_arg<T: for<'de> Deserialize<'de>>(arg: &str, what: &str) -> anyhow::Result<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("cannot read {what} file {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("invalid {what}"))
}

fn intrinsics_arg(arg: Option<&str>) -> anyhow::Result<Option<CameraIntrinsics>> {
    arg.map(|a| {
        let k: CameraIntrinsics = json_arg(a, "intrinsics")?;
        k.validate()?;
        Ok(k)
    })
    .transpose()
}

/// Output sink: a file, or stdout.
fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("cannot create {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `flag`, else `<output_dir>/<default_name>`, else stdout.
fn output_path(
    flag: Option<&PathBuf>,
    manifest: &RunManifest,
    default_name: &str,
) -> Option<PathBuf> {
    flag.cloned()
        .or_else(|| manifest.output_dir.as_ref().map(|d| d.join(default_name)))
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    if threads <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot start worker threads")?;
    Ok(pool.install(f))
}

// ---------------------------------------------------------------- corners

#[derive(Debug, Serialize, Deserialize)]
pub struct CornerFile {
    pub mesh: String,
    pub sharp_angle_tol: f64,
    pub ortho_tol: f64,
    pub corners: Vec<CornerFrame>,
}

pub fn cmd_extract_corners(a: &ExtractArgs) -> Result<(), CliError> {
    let mesh = load_mesh(&a.mesh).input()?;
    let corners = extract_corners(&mesh, a.sharp_tol, a.ortho_tol);
    let file = CornerFile {
        mesh: a.mesh.display().to_string(),
        sharp_angle_tol: a.sharp_tol,
        ortho_tol: a.ortho_tol,
        corners,
    };
    let mut out = open_output(a.output.as_deref()).runtime()?;
    serde_json::to_writer_pretty(&mut out, &file).runtime()?;
    writeln!(out).and_then(|_| out.flush()).runtime()?;
    if file.corners.is_empty() {
        eprintln!(
            "warning: no trihedral corners found in {}",
            a.mesh.display()
        );
    }
    eprintln!("{} corners", file.corners.len());
    Ok(())
}

// ----------------------------------------------------------------- models

/// An object model plus the metadata the batch commands need.
pub struct LoadedModel {
    pub id: String,
    pub model: ObjectModel,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn load_model(entry: &ModelEntry) -> anyhow::Result<LoadedModel> {
    let mesh = load_mesh(&entry.path)?;
    let model = ObjectModel::from_mesh_with(
        mesh,
        entry.sharp_angle_tol.unwrap_or(DEFAULT_SHARP_ANGLE_TOL),
        entry.ortho_tol.unwrap_or(DEFAULT_ORTHO_TOL),
        entry.scale_fraction.unwrap_or(DEFAULT_SCALE_FRACTION),
    )?
    .with_symmetric(entry.symmetric);
    let model = match &entry.corners {
        Some(idx) => model.with_corner_subset(idx)?,
        None => model,
    };
    Ok(LoadedModel {
        id: entry.id.clone().unwrap_or_else(|| stem(&entry.path)),
        model,
    })
}

/// Manifest (if any) and the models selected by flags or manifest.
fn resolve_models(args: &ModelArgs) -> Result<(RunManifest, Vec<LoadedModel>), CliError> {
    let manifest = match &args.manifest {
        Some(p) => RunManifest::load(p).input()?,
        None => RunManifest::default(),
    };
    let entries = match &args.model {
        Some(path) => vec![ModelEntry {
            path: path.clone(),
            id: args.model_id.clone(),
            symmetric: args.symmetric,
            corners: args.corners.clone(),
            sharp_angle_tol: None,
            ortho_tol: None,
            scale_fraction: args.scale_fraction,
        }],
        None => manifest.models.clone(),
    };
    if entries.is_empty() {
        return Err(CliError::Input(anyhow!(
            "no model given (use --model or a manifest)"
        )));
    }
    let models = entries
        .iter()
        .map(load_model)
        .collect::<anyhow::Result<Vec<_>>>()
        .input()?;
    Ok((manifest, models))
}

/// Model for a scenario: the only model, or the one whose id matches.
fn model_for<'a>(models: &'a [LoadedModel], scenario: &Scenario) -> Option<&'a LoadedModel> {
    if models.len() == 1 {
        return models.first();
    }
    models.iter().find(|m| m.id == scenario.model_id)
}

// ---------------------------------------------------------------- scenarios

/// Parses a JSON-lines file; blank lines are skipped, `line` numbers are
/// 1-based.
pub fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        out.push(value);
    }
    Ok(out)
}

fn read_scenarios(
    flag: Option<&PathBuf>,
    manifest: &RunManifest,
) -> Result<Vec<Scenario>, CliError> {
    let path = flag.or(manifest.scenarios.as_ref()).ok_or_else(|| {
        CliError::Input(anyhow!(
            "no scenario file given (use --scenarios or a manifest)"
        ))
    })?;
    let scenarios: Vec<Scenario> = read_json_lines(path).input()?;
    for (i, s) in scenarios.iter().enumerate() {
        s.intrinsics
            .validate()
            .with_context(|| format!("{}: scenario {}", path.display(), i + 1))
            .input()?;
        for d in &s.detections {
            d.validate()
                .with_context(|| format!("{}: scenario {}", path.display(), i + 1))
                .input()?;
        }
    }
    Ok(scenarios)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let (manifest, models) = resolve_models(&a.models)?;
    let settings = &manifest.simulate;
    let mut noise = settings.noise.unwrap_or_default();
    if let Some(v) = a.sigma {
        noise.pixel_sigma = v;
    }
    if let Some(v) = a.outlier_rate {
        noise.outlier_rate = v;
    }
    if let Some(v) = a.miss_rate {
        noise.miss_rate = v;
    }
    if let Some(v) = a.clutter {
        noise.clutter_corner_count = v;
    }
    if a.identity_only {
        noise.permutation_flip = PermutationFlip::IdentityOnly;
    }
    noise.validate().map_err(anyhow::Error::msg).input()?;
    let k = intrinsics_arg(a.intrinsics.as_deref())
        .input()?
        .or(settings.intrinsics)
        .unwrap_or_else(CameraIntrinsics::vga);
    let sampler = settings.sampler.unwrap_or_default();
    let count = a.count.or(settings.count).unwrap_or(100);
    let seed = a.seed.or(manifest.seed).unwrap_or(0);

    let mut scenarios = Vec::with_capacity(count * models.len());
    for (mi, m) in models.iter().enumerate() {
        for i in 0..count {
            let s = seed.wrapping_add((mi * count + i) as u64);
            scenarios.push(generate_scenario(&m.model, &m.id, &k, &noise, &sampler, s));
        }
    }

    let path = output_path(a.output.as_ref(), &manifest, "scenarios.jsonl");
    let mut out = open_output(path.as_deref()).runtime()?;
    for s in &scenarios {
        serde_json::to_writer(&mut out, s).runtime()?;
        writeln!(out).runtime()?;
    }
    out.flush().runtime()?;

    let dets: Vec<usize> = scenarios.iter().map(|s| s.detections.len()).collect();
    eprintln!(
        "{} scenarios, {} detections (min {}, max {} per scenario), {} without detections",
        scenarios.len(),
        dets.iter().sum::<usize>(),
        dets.iter().min().copied().unwrap_or(0),
        dets.iter().max().copied().unwrap_or(0),
        dets.iter().filter(|&&n| n == 0).count()
    );
    Ok(())
}

// ---------------------------------------------------------------- estimate

/// One line of the `estimate` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub pose: Pose,
    pub score: f64,
    pub inliers: usize,
    pub assignment: Vec<InlierMatch>,
}

impl From<ScoredPose> for PoseRecord {
    fn from(s: ScoredPose) -> Self {
        Self {
            pose: s.pose,
            score: s.score,
            inliers: s.inlier_count,
            assignment: s.inlier_assignment,
        }
    }
}

fn estimator_config(a: &EstimateArgs, manifest: &RunManifest) -> Result<EstimatorConfig, CliError> {
    let mut cfg = manifest.estimator.unwrap_or_default();
    if let Some(v) = a.tau_px {
        cfg.inlier_px_threshold = v;
    }
    if let Some(v) = a.min_inliers {
        cfg.min_inliers = v;
    }
    if let Some(g) = a.gate {
        cfg.gate = match g {
            GateArg::Strict => InlierGate::Strict,
            GateArg::AtLeast => InlierGate::AtLeast,
        };
    }
    if let Some(s) = a.scorer {
        cfg.scorer = match s {
            ScorerArg::Reprojection => ScorerKind::Reprojection,
            ScorerArg::EdgeNcc => ScorerKind::EdgeNcc,
        };
    }
    // Scenarios are the unit of parallelism here.
    cfg.parallel = false;
    cfg.validate().input()?;
    Ok(cfg)
}

/// Runs the estimator on every scenario, returning results in input order.
pub fn estimate_batch(
    models: &[LoadedModel],
    scenarios: &[Scenario],
    config: &EstimatorConfig,
    edge_clutter: usize,
    threads: usize,
) -> anyhow::Result<Vec<Option<PoseRecord>>> {
    let one = |(i, s): (usize, &Scenario)| -> anyhow::Result<Option<PoseRecord>> {
        let m = model_for(models, s)
            .ok_or_else(|| anyhow!("scenario {}: unknown model '{}'", i + 1, s.model_id))?;
        let edges = (config.scorer == ScorerKind::EdgeNcc)
            .then(|| synthetic_edge_image(&m.model, s, edge_clutter));
        let best = estimate(
            &m.model,
            &s.detections,
            &s.intrinsics,
            config,
            edges.as_ref(),
        )
        .with_context(|| format!("scenario {}", i + 1))?;
        Ok(best.map(PoseRecord::from))
    };
    with_threads(threads, || {
        if threads <= 1 {
            scenarios.iter().enumerate().map(one).collect()
        } else {
            scenarios.par_iter().enumerate().map(one).collect()
        }
    })?
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let (manifest, models) = resolve_models(&a.models)?;
    let config = estimator_config(a, &manifest)?;
    let scenarios = read_scenarios(a.scenarios.as_ref(), &manifest)?;
    for (i, s) in scenarios.iter().enumerate() {
        if model_for(&models, s).is_none() {
            return Err(CliError::Input(anyhow!(
                "scenario {}: unknown model '{}'",
                i + 1,
                s.model_id
            )));
        }
    }
    let edge_clutter = a.edge_clutter.or(manifest.edge_clutter).unwrap_or(0);
    let results =
        estimate_batch(&models, &scenarios, &config, edge_clutter, a.parallel).runtime()?;

    let path = output_path(a.output.as_ref(), &manifest, "poses.jsonl");
    let mut out = open_output(path.as_deref()).runtime()?;
    for r in &results {
        serde_json::to_writer(&mut out, r).runtime()?;
        writeln!(out).runtime()?;
    }
    out.flush().runtime()?;
    let found = results.iter().filter(|r| r.is_some()).count();
    eprintln!("{found}/{} scenarios with a pose", results.len());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

/// Evaluation record of every scenario, in input order.
pub fn evaluate_batch(
    models: &[LoadedModel],
    scenarios: &[Scenario],
    poses: &[Option<PoseRecord>],
    seed: u64,
    threads: usize,
) -> anyhow::Result<Vec<EvaluationRecord>> {
    if scenarios.len() != poses.len() {
        bail!(
            "{} scenarios but {} pose records",
            scenarios.len(),
            poses.len()
        );
    }
    let points: HashMap<&str, Vec<_>> = models
        .iter()
        .map(|m| (m.id.as_str(), model_points(&m.model.mesh, seed)))
        .collect();
    let one = |(i, (s, p)): (usize, (&Scenario, &Option<PoseRecord>))| -> anyhow::Result<EvaluationRecord> {
        let m = model_for(models, s).ok_or_else(|| anyhow!("scenario {}: unknown model '{}'", i + 1, s.model_id))?;
        let est = p.as_ref().map(|r| &r.pose);
        Ok(evaluate_pose(&m.model, &points[m.id.as_str()], est, &s.gt_pose, &s.intrinsics)?)
    };
    with_threads(threads, || {
        if threads <= 1 {
            scenarios.iter().zip(poses).enumerate().map(one).collect()
        } else {
            scenarios
                .par_iter()
                .zip(poses)
                .enumerate()
                .map(one)
                .collect()
        }
    })?
}

/// Groups records by scenario group, in order of first appearance.
pub fn group_records(
    scenarios: &[Scenario],
    records: &[EvaluationRecord],
) -> Vec<(String, Vec<EvaluationRecord>)> {
    let mut groups: Vec<(String, Vec<EvaluationRecord>)> = Vec::new();
    for (s, r) in scenarios.iter().zip(records) {
        match groups.iter_mut().find(|(g, _)| g == s.group_key()) {
            Some((_, v)) => v.push(*r),
            None => groups.push((s.group_key().to_string(), vec![*r])),
        }
    }
    groups
}

fn overlay(model: &ObjectModel, s: &Scenario, est: Option<&Pose>) -> Raster {
    let gt = model.edge_sketch().render(&s.gt_pose, &s.intrinsics, false);
    let gray = Raster::from_values(
        gt.width(),
        gt.height(),
        gt.values().iter().map(|v| v * 0.5).collect(),
    )
    .expect("same size");
    let mut out = gray;
    if let Some(p) = est {
        let e = model.edge_sketch().render(p, &s.intrinsics, false);
        out.max_with(&e).expect("same size");
    }
    out
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let (manifest, models) = resolve_models(&a.models)?;
    let scenarios = read_scenarios(a.scenarios.as_ref(), &manifest)?;
    let poses_path = a
        .poses
        .as_ref()
        .or(manifest.poses.as_ref())
        .ok_or_else(|| {
            CliError::Input(anyhow!("no pose file given (use --poses or a manifest)"))
        })?;
    let poses: Vec<Option<PoseRecord>> = read_json_lines(poses_path).input()?;
    if scenarios.len() != poses.len() {
        return Err(CliError::Input(anyhow!(
            "{} scenarios but {} pose records",
            scenarios.len(),
            poses.len()
        )));
    }
    for (i, s) in scenarios.iter().enumerate() {
        if model_for(&models, s).is_none() {
            return Err(CliError::Input(anyhow!(
                "scenario {}: unknown model '{}'",
                i + 1,
                s.model_id
            )));
        }
    }
    let seed = a.seed.or(manifest.seed).unwrap_or(0);
    let records = evaluate_batch(&models, &scenarios, &poses, seed, a.parallel).runtime()?;
    let summary = aggregate(&group_records(&scenarios, &records)).input()?;

    let path = output_path(a.output.as_ref(), &manifest, "report.csv");
    let mut out = open_output(path.as_deref()).runtime()?;
    out.write_all(summary.to_csv().as_bytes())
        .and_then(|_| out.flush())
        .runtime()?;
    if let Some(p) = &a.conditional {
        std::fs::write(p, summary.to_conditional_csv())
            .with_context(|| format!("cannot write {}", p.display()))
            .runtime()?;
    }
    if let Some(dir) = &a.render {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .runtime()?;
        for (i, (s, p)) in scenarios.iter().zip(&poses).enumerate() {
            let m = model_for(&models, s).expect("checked above");
            let img = overlay(&m.model, s, p.as_ref().map(|r| &r.pose));
            let file = dir.join(format!("scene_{i:05}.pgm"));
            std::fs::write(&file, img.to_pgm())
                .with_context(|| format!("cannot write {}", file.display()))
                .runtime()?;
        }
    }
    eprintln!(
        "{} scenarios in {} groups: ADD10 {:.1}%, detection {:.1}%",
        scenarios.len(),
        summary.rows.len(),
        summary.mean[0],
        summary.mean[3]
    );
    Ok(())
}

// ------------------------------------------------------------------ render

pub fn cmd_render(a: &RenderArgs) -> Result<(), CliError> {
    let mesh = load_mesh(&a.mesh).input()?;
    let pose: Pose = json_arg(&a.pose, "pose").input()?;
    let k = intrinsics_arg(a.intrinsics.as_deref())
        .input()?
        .unwrap_or_else(CameraIntrinsics::vga);
    let raster = if a.mask {
        render_mask(&mesh, &pose, &k)
    } else {
        cornerpose::render::render_edges(&mesh, &pose, &k, a.blur)
    };
    std::fs::write(&a.output, raster.to_pgm())
        .with_context(|| format!("cannot write {}", a.output.display()))
        .runtime()?;
    eprintln!("{} lit pixels", raster.count_nonzero());
    Ok(())
}
