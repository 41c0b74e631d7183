//! `diffreg`: dataset generation, training, rendering, evaluation and
//! regularizer verification.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffreg::camera::{Camera, Projection};
use diffreg::dataset::{DatasetError, SceneDataset};
use diffreg::field::{Checkpoint, CheckpointError};
use diffreg::imageio::{self, FloatImage};
use diffreg::render::render_view_batched;
use diffreg::scene::{generate_dataset, AnalyticScene, DatasetOptions, SceneError};
use diffreg::train::{evaluate_views, TrainError, Trainer, ViewMetrics};
use diffreg::verify::{verify_model, verify_scene, VerifyReport};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Diverged(_) => 4,
            Self::Verification(_) => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Io(format!("dataset: {e}"))
    }
}

impl From<imageio::ImageError> for CliError {
    fn from(e: imageio::ImageError) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Loss(_) => Self::Usage(e.to_string()),
            TrainError::Diverged { ref checkpoint, .. } => {
                let at = checkpoint.as_ref().map(|p| format!("; last good state in {}", p.display())).unwrap_or_default();
                Self::Diverged(format!("{e}{at}"))
            }
            TrainError::Io { .. } | TrainError::Checkpoint(_) => Self::Io(e.to_string()),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        Self::Usage(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "diffreg", version, about = "Neural fields with differential-geometry regularizers")]
struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true, env = "DIFFREG_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a dataset of an analytic scene.
    GenData(GenDataArgs),
    /// Train a field from a JSON run config.
    #[command(after_long_help = config::config_key_help())]
    Train(TrainArgs),
    /// Render RGB, depth and normals from a checkpoint.
    Render(RenderArgs),
    /// Image and depth metrics of a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run the derivative and curvature oracle checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProjectionArg {
    Perspective,
    Orthographic,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Perspective => Projection::Perspective,
            ProjectionArg::Orthographic => Projection::Orthographic,
        }
    }
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Scene description (JSON).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 3)]
    train_views: usize,
    #[arg(long, default_value_t = 3)]
    test_views: usize,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 64)]
    res: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Camera distance from the scene centroid.
    #[arg(long, default_value_t = 4.0)]
    radius: f64,
    #[arg(long, value_enum, default_value = "perspective")]
    projection: ProjectionArg,
    /// Horizontal field of view in degrees (perspective only).
    #[arg(long, default_value_t = 40.0)]
    fov: f64,
    /// Standard deviation of pixel noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Run config (JSON); see below for the keys.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Camera description (JSON).
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    camera: Option<PathBuf>,
    /// Dataset whose camera `--view` is rendered.
    #[arg(long, requires = "view")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    view: Option<usize>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 1024)]
    chunk: usize,
    /// Output prefix; writes `<out>.png`, `<out>_depth.pfm`, `<out>_normal.pfm`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 1024)]
    chunk: usize,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Analytic scene (JSON).
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    scene: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    report: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Strict JSON parse reporting the failing key path.
fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Usage(format!("{what}: at `{}`: {}", e.path(), e.inner())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e: CheckpointError| CliError::Io(format!("loading checkpoint {}: {e}", path.display())))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let scene: AnalyticScene = parse_json(&read_text(&a.scene)?, "scene")?;
    let opts = DatasetOptions {
        n_train: a.train_views,
        n_test: a.test_views,
        radius: a.radius,
        resolution: a.res,
        seed: a.seed,
        projection: a.projection.into(),
        fov_degrees: a.fov,
        noise_std: a.noise,
        ..DatasetOptions::default()
    };
    opts.validate().map_err(CliError::Usage)?;
    let ds = generate_dataset(&scene, &opts)?;
    ds.save(&a.out)?;
    println!(
        "wrote {}: {} train + {} test views at {}x{}, seed {}",
        a.out.display(),
        ds.train.len(),
        ds.test.len(),
        a.res,
        a.res,
        a.seed
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let run = config::parse_run_config(&read_text(&a.config)?).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let ds = SceneDataset::load(&run.dataset)?;
    write_bytes(&run.output_dir.join("config.json"), config::to_pretty_json(&run).as_bytes())?;
    let mut trainer = Trainer::new(&ds, run.train.clone())?;
    trainer.run(Some(&run.output_dir))?;
    if let Some(last) = trainer.history.last() {
        println!("step {}: loss {:.6}, test psnr {}", last.step, last.loss.total, fmt_opt(last.psnr));
    }
    println!("wrote {}", run.output_dir.display());
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cam: Camera = match (&a.camera, &a.dataset) {
        (Some(p), _) => parse_json(&read_text(p)?, "camera")?,
        (None, Some(d)) => {
            let ds = SceneDataset::load(d)?;
            let v = a.view.expect("clap enforces --view");
            ds.cameras.get(v).cloned().ok_or_else(|| CliError::Usage(format!("view {v} out of range (dataset has {})", ds.cameras.len())))?
        }
        (None, None) => unreachable!("clap enforces a camera source"),
    };
    cam.validate().map_err(|e| CliError::Usage(format!("camera: {e}")))?;
    if a.samples == 0 || a.chunk == 0 {
        return Err(CliError::Usage("--samples and --chunk must be positive".into()));
    }
    let view = render_view_batched(&ckpt.model, &cam, a.samples, true, a.chunk);
    let base = a.out.to_string_lossy().into_owned();
    let png = PathBuf::from(format!("{base}.png"));
    write_bytes(&png, &imageio::encode_png(view.width, view.height, &view.rgb)?)?;
    let depth = FloatImage::from_scalar(view.width, view.height, &view.depth);
    write_bytes(Path::new(&format!("{base}_depth.pfm")), &imageio::encode_pfm(&depth)?)?;
    let normal = FloatImage::from_vectors(view.width, view.height, &view.normal);
    write_bytes(Path::new(&format!("{base}_normal.pfm")), &imageio::encode_pfm(&normal)?)?;
    println!("wrote {base}.png, {base}_depth.pfm, {base}_normal.pfm ({}x{})", view.width, view.height);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.6}")
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub const EVAL_COLUMNS: &str = "view,psnr,ssim,depth_mae,roughness,roughness_full";

fn eval_csv(rows: &[ViewMetrics]) -> String {
    let mut s = format!("{EVAL_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.view,
            fmt_f64(r.psnr),
            fmt_opt(r.ssim),
            fmt_opt(r.depth_mae),
            fmt_opt(r.roughness),
            fmt_f64(r.roughness_full)
        );
    }
    let _ = writeln!(
        s,
        "mean,{},{},{},{},{}",
        fmt_opt(mean(rows.iter().map(|r| r.psnr))),
        fmt_opt(mean(rows.iter().filter_map(|r| r.ssim))),
        fmt_opt(mean(rows.iter().filter_map(|r| r.depth_mae))),
        fmt_opt(mean(rows.iter().filter_map(|r| r.roughness))),
        fmt_opt(mean(rows.iter().map(|r| r.roughness_full)))
    );
    s
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let ds = SceneDataset::load(&a.dataset)?;
    if a.samples == 0 || a.chunk == 0 {
        return Err(CliError::Usage("--samples and --chunk must be positive".into()));
    }
    let views = match a.split {
        Split::Train => &ds.train,
        Split::Test => &ds.test,
    };
    let rows = evaluate_views(&ckpt.model, &ds, views, a.samples, a.chunk);
    let csv = eval_csv(&rows);
    print!("{}", csv.replace(',', "\t"));
    if let Some(out) = &a.out {
        write_bytes(out, csv.as_bytes())?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let report: VerifyReport = match (&a.scene, &a.checkpoint) {
        (Some(p), _) => {
            let scene: AnalyticScene = parse_json(&read_text(p)?, "scene")?;
            scene.validate().map_err(CliError::Usage)?;
            verify_scene(&scene, a.seed)
        }
        (None, Some(p)) => verify_model(&load_checkpoint(p)?.model, a.seed),
        (None, None) => unreachable!("clap enforces a target"),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_bytes(&a.report, json.as_bytes())?;
    for c in &report.checks {
        println!("{} {:<32} {:.3e} (tol {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.tolerance);
    }
    if report.passed {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Verification(format!("{failed} of {} checks failed; report in {}", report.checks.len(), a.report.display())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
