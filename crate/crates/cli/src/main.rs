//! `tmo3d`: annotate, simulate, evaluate and inspect object maps.
//!
//! Exit codes: 0 on success, 1 when an input or the configuration is
//! invalid, 2 on any other failure (I/O, unwritable output).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use tmo3d_core::eval::{evaluate, EvalError};
use tmo3d_core::export::{
    read_map, read_sequence, to_stable_json, write_map, ExportError, MapFile, SCHEMA_VERSION,
};
use tmo3d_core::geo::ecef_to_wgs84;
use tmo3d_core::io::InputError;
use tmo3d_core::pipeline::{build_map, load_sequence, write_annotations, PipelineConfig, PipelineError, SequenceInputs};
use tmo3d_core::sim::{generate_scene, SceneSpec, SimError};

#[derive(Debug, Parser)]
#[command(name = "tmo3d", version, about = "3D annotation of traffic lights and signs")]
struct Cli {
    /// Log filter, e.g. `info` or `tmo3d_core=debug`. RUST_LOG wins when set.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the object map of a sequence and write per-frame annotations.
    Annotate(AnnotateArgs),
    /// Generate a synthetic sequence with ground truth from a scene file.
    Simulate(SimulateArgs),
    /// Compare a prediction directory against a ground-truth directory.
    Evaluate(EvaluateArgs),
    /// Print the objects of a map file.
    Map(MapArgs),
    /// Print the effective configuration with every default filled in.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML configuration file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set refine.angle_threshold=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    /// Directory holding poses.txt, detections.txt, calibration.toml and
    /// optionally frames.txt. Individual file flags take precedence.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Frame list; without it every frame with a detection is annotated.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Output root; annotations go to `<out>/<sequence>/`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "sequence")]
    sequence: String,
    /// Reuse this map instead of triangulating.
    #[arg(long)]
    map_in: Option<PathBuf>,
    /// Where to store the map; defaults to `<out>/<sequence>.map.json`.
    #[arg(long)]
    map_out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replace the scene's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report directory: summary.txt, report.json and CSV grids.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct MapArgs {
    map: PathBuf,
    /// Print the map file as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Validation,
    Runtime,
}

struct Failure {
    kind: Kind,
    error: anyhow::Error,
}

impl Failure {
    fn validation(error: anyhow::Error) -> Self {
        Self {
            kind: Kind::Validation,
            error,
        }
    }

    fn runtime(error: anyhow::Error) -> Self {
        Self {
            kind: Kind::Runtime,
            error,
        }
    }
}

/// Whether a core error is the caller's fault (bad input or config) or
/// the environment's.
trait Classify {
    fn kind(&self) -> Kind;
}

impl Classify for InputError {
    fn kind(&self) -> Kind {
        match self {
            InputError::Io { .. } => Kind::Runtime,
            _ => Kind::Validation,
        }
    }
}

impl Classify for ExportError {
    fn kind(&self) -> Kind {
        match self {
            ExportError::Io { .. } => Kind::Runtime,
            _ => Kind::Validation,
        }
    }
}

impl Classify for EvalError {
    fn kind(&self) -> Kind {
        match self {
            EvalError::InvalidConfig(_) => Kind::Validation,
            EvalError::Export(e) => e.kind(),
            EvalError::Input(e) => e.kind(),
        }
    }
}

impl Classify for SimError {
    fn kind(&self) -> Kind {
        match self {
            SimError::Invalid(_) => Kind::Validation,
            SimError::Input(e) => e.kind(),
            SimError::Export(e) => e.kind(),
        }
    }
}

impl Classify for PipelineError {
    fn kind(&self) -> Kind {
        match self {
            PipelineError::Input(e) => e.kind(),
            PipelineError::Export(e) => e.kind(),
            PipelineError::Eval(e) => e.kind(),
            PipelineError::Config(_) | PipelineError::Sequence(_) | PipelineError::Triangulation(_) => {
                Kind::Validation
            }
        }
    }
}

impl<E> From<E> for Failure
where
    E: Classify + std::error::Error + Send + Sync + 'static,
{
    fn from(e: E) -> Self {
        Self {
            kind: e.kind(),
            error: e.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::runtime)?;
            PipelineConfig::from_toml(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(Failure::validation)?
        }
        None => PipelineConfig::default(),
    };
    for assignment in &args.overrides {
        cfg.set(assignment)?;
    }
    Ok(cfg)
}

fn resolve(explicit: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf, Failure> {
    explicit
        .clone()
        .or_else(|| dir.as_ref().map(|d| d.join(name)))
        .ok_or_else(|| Failure::validation(anyhow!("--{flag} or --input is required")))
}

fn annotate(args: &AnnotateArgs) -> Outcome {
    let cfg = load_config(&args.config)?;
    let frames = args
        .frames
        .clone()
        .or_else(|| args.input.as_ref().map(|d| d.join("frames.txt")).filter(|p| p.is_file()));
    let inputs = SequenceInputs {
        poses: resolve(&args.poses, &args.input, "poses.txt", "poses")?,
        detections: resolve(&args.detections, &args.input, "detections.txt", "detections")?,
        calibration: resolve(&args.calibration, &args.input, "calibration.toml", "calibration")?,
        frames,
    };
    if args.sequence.is_empty() || args.sequence.contains(['/', '\\']) || args.sequence.starts_with('.') {
        return Err(Failure::validation(anyhow!(
            "sequence name {:?} is not usable as a directory name",
            args.sequence
        )));
    }
    let seq = load_sequence(&inputs)?;
    info!(
        "{} frames, {} detections, {} cameras",
        seq.frames.len(),
        seq.detections.len(),
        seq.cameras.len()
    );
    let map = match &args.map_in {
        Some(path) => {
            let map = read_map(path)?;
            info!("{} objects from {}", map.len(), path.display());
            map
        }
        None => build_map(&seq, &cfg)?.map,
    };
    let dir = args.out.join(&args.sequence);
    let written = write_annotations(&seq, &map, &cfg, &dir)?;
    let map_out = args
        .map_out
        .clone()
        .unwrap_or_else(|| args.out.join(format!("{}.map.json", args.sequence)));
    write_map(&map, &map_out)?;
    info!("{written} annotations in {}, map in {}", dir.display(), map_out.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let cfg = load_config(&args.config)?;
    let mut spec = SceneSpec::from_file(&args.scene)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = generate_scene(&spec)?;
    out.write_to(&args.out, &cfg.export)?;
    info!(
        "{} frames, {} detections, {} objects, {} ghosts written to {}",
        out.frames.len(),
        out.detections.len(),
        out.ground_truth.len(),
        out.ghosts.len(),
        args.out.display()
    );
    Ok(())
}

fn evaluate_dirs(args: &EvaluateArgs) -> Outcome {
    let cfg = load_config(&args.config)?;
    let preds = read_sequence(&args.pred)?;
    let gts = read_sequence(&args.gt)?;
    let report = evaluate(&preds, &gts, &cfg.eval)?;
    if report.frames_evaluated == 0 {
        warn!("no frame ids in common between {} and {}", args.pred.display(), args.gt.display());
    }
    report.write_to(&args.out)?;
    print!("{}", report.summary_text());
    Ok(())
}

fn show_map(args: &MapArgs) -> Outcome {
    let map = read_map(&args.map)?;
    if args.json {
        let file = MapFile {
            schema_version: SCHEMA_VERSION,
            objects: map,
        };
        let bytes = to_stable_json(&file).map_err(|e| Failure::runtime(e.into()))?;
        std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::runtime(e.into()))?;
        return Ok(());
    }
    println!(
        "{:>6} {:<14} {:>13} {:>13} {:>9} {:>6} {:>6} {:>6} {:>7} {:>7}",
        "id", "class", "latitude", "longitude", "altitude", "width", "depth", "height", "yaw", "support"
    );
    for b in &map {
        let g = ecef_to_wgs84(&b.center);
        println!(
            "{:>6} {:<14} {:>13.8} {:>13.8} {:>9.3} {:>6.3} {:>6.3} {:>6.3} {:>7.2} {:>7}",
            b.object_id,
            b.class.as_str(),
            g.latitude,
            g.longitude,
            g.altitude,
            b.extent[0],
            b.extent[1],
            b.extent[2],
            b.yaw.to_degrees(),
            b.support
        );
    }
    Ok(())
}

fn show_config(args: &ConfigArgs) -> Outcome {
    print!("{}", load_config(args)?.to_toml());
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Annotate(a) => annotate(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate_dirs(a),
        Command::Map(a) => show_map(a),
        Command::Config(a) => show_config(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            match f.kind {
                Kind::Validation => ExitCode::from(1),
                Kind::Runtime => ExitCode::from(2),
            }
        }
    }
}

