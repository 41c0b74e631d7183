//! Optimization loop: ray batches, loss composition, Adam, evaluation and
//! checkpoints.
//!
//! A step draws `batch_size` training pixels and stratified sample depths
//! from streams keyed by `(seed, step)`, evaluates the loss in chunks of
//! rays (one tape per chunk, chunks in parallel), sums the chunk gradients
//! in chunk order and applies one Adam update. Every loss is divided by
//! the batch size before weighting.

pub mod adam;
pub mod batch;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamError, AdamState};
pub use batch::{pixel_ray, sample_ray_batch, train_pixel_count, PixelRef, TrainRays};

use crate::autodiff::{backward, Tape, Tensor, Var};
use crate::camera::Ray;
use crate::curvature::{self, CurvatureConfig};
use crate::dataset::SceneDataset;
use crate::field::{Checkpoint, CheckpointError, FieldModel, ModelSpec, OptimizerBlock, RadianceConfig, RadianceFieldModel, SdfFieldModel};
use crate::linalg::V3;
use crate::metrics;
use crate::regularization::{self as reg, DepthVariant, LossConfig, LossError, LossReport, LossTerm};
use crate::render::{self, JetRequest, RayBatch, SamplingMode, TapeField};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String, checkpoint: Option<PathBuf> },
    #[error("i/o on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

fn default_model() -> ModelSpec {
    ModelSpec::Radiance(RadianceConfig::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    /// Rays per step.
    pub batch_size: usize,
    pub lr: f64,
    /// The learning rate is multiplied by `lr_decay_rate` every
    /// `lr_decay_steps` steps, continuously.
    pub lr_decay_rate: f64,
    pub lr_decay_steps: u64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub samples_per_ray: usize,
    pub sampling: SamplingMode,
    /// Steps between evaluations; the final step is always evaluated.
    pub eval_every: u64,
    /// Steps between checkpoints (0 keeps only the final one).
    pub checkpoint_every: u64,
    /// Rays per tape.
    pub chunk_rays: usize,
    /// Fixed training rays on which the photometric loss is tracked.
    pub probe_rays: usize,
    pub model: ModelSpec,
    pub loss: LossConfig,
    /// Eikonal and curvature terms; SDF models only.
    pub curvature: Option<CurvatureConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch_size: 4096,
            lr: 5e-4,
            lr_decay_rate: 0.1,
            lr_decay_steps: 5000,
            adam: AdamConfig::default(),
            seed: 0,
            samples_per_ray: 64,
            sampling: SamplingMode::Stratified,
            eval_every: 1000,
            checkpoint_every: 0,
            chunk_rays: 1024,
            probe_rays: 1024,
            model: default_model(),
            loss: LossConfig::default(),
            curvature: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.chunk_rays == 0 || self.eval_every == 0 {
            return bad("batch_size, chunk_rays and eval_every must be positive");
        }
        if self.samples_per_ray < 2 {
            return bad("samples_per_ray must be at least 2");
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.lr_decay_rate) || self.lr_decay_steps == 0 {
            return bad("need lr > 0, 0 <= lr_decay_rate <= 1 and lr_decay_steps > 0");
        }
        self.loss.validate()?;
        match &self.model {
            ModelSpec::Radiance(c) => {
                c.validate().map_err(TrainError::Config)?;
                if self.curvature.is_some() {
                    return bad("curvature terms need an sdf model");
                }
            }
            ModelSpec::Sdf(c) => c.validate().map_err(TrainError::Config)?,
        }
        if let Some(c) = &self.curvature {
            c.validate().map_err(TrainError::Config)?;
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr * self.lr_decay_rate.powf(step as f64 / self.lr_decay_steps as f64)
    }

    pub fn weight(&self, term: &str) -> Result<f64, LossError> {
        match (term, &self.curvature) {
            ("eikonal", Some(c)) => Ok(c.lambda_sdf),
            ("curvature", Some(c)) => Ok(c.lambda_curv),
            _ => self.loss.weight(term),
        }
    }
}

/// Evaluation summary written at eval points.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    /// Terms of the last training batch.
    pub loss: LossReport,
    /// Mean photometric loss per ray on the fixed probe rays.
    pub probe_rgb: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub depth_mae: Option<f64>,
    pub roughness: Option<f64>,
    pub roughness_full: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "step",
    "total",
    "rgb",
    "depth",
    "normals",
    "eikonal",
    "curvature",
    "probe_rgb",
    "psnr",
    "ssim",
    "depth_mae",
    "roughness",
    "roughness_full",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

pub fn metrics_csv(history: &[MetricsRecord]) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in history {
        let term = |k: &str| fmt_opt(r.loss.terms.get(k).copied());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.loss.total,
            term("rgb"),
            term("depth"),
            term("normals"),
            term("eikonal"),
            term("curvature"),
            r.probe_rgb,
            fmt_opt(r.psnr),
            fmt_opt(r.ssim),
            fmt_opt(r.depth_mae),
            fmt_opt(r.roughness),
            fmt_opt(r.roughness_full),
        );
    }
    s
}

/// Per-view evaluation of a model against a dataset split.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub depth_mae: Option<f64>,
    /// Roughness over opaque pixels (with valid ground truth, if any).
    pub roughness: Option<f64>,
    pub roughness_full: f64,
}

pub fn evaluate_views<F: TapeField + ?Sized>(field: &F, ds: &SceneDataset, views: &[usize], samples: usize, chunk: usize) -> Vec<ViewMetrics> {
    views
        .iter()
        .map(|&v| {
            let cam = &ds.cameras[v];
            let out = render::render_view_batched(field, cam, samples, false, chunk);
            let gt = &ds.images[v];
            let psnr = metrics::psnr(&out.rgb, gt).expect("sizes match");
            let ssim = metrics::ssim(&out.rgb, gt, cam.width, cam.height).ok();
            let (depth_mae, roughness) = match &ds.depths {
                Some(d) => {
                    let m = metrics::depth_metrics(&out.depth, &d[v], &out.opacity, cam.width, cam.height, cam.far as f32 as f64).expect("sizes match");
                    (m.mae, m.roughness)
                }
                None => {
                    let mask: Vec<bool> = out.opacity.iter().map(|&o| o > 0.5).collect();
                    (None, metrics::masked_depth_roughness(&out.depth, &mask, cam.width, cam.height))
                }
            };
            ViewMetrics { view: v, psnr, ssim, depth_mae, roughness, roughness_full: metrics::depth_roughness(&out.depth, cam.width, cam.height) }
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

// ---------------------------------------------------------------------------
// Objectives

struct ChunkOut {
    grads: Vec<f64>,
    terms: Vec<LossTerm>,
}

fn tape_failure(step: u64, e: impl std::fmt::Display) -> TrainError {
    TrainError::Diverged { step, reason: e.to_string(), checkpoint: None }
}

/// Photometric and depth/normal terms for one chunk of rays; values are
/// already divided by `batch`.
fn chunk_objective<F: TapeField + ?Sized>(
    field: &F,
    ds: &SceneDataset,
    rays: &[Ray],
    targets: &[V3<f64>],
    pixels: &[PixelRef],
    t: &[Vec<f64>],
    cfg: &LossConfig,
    batch: usize,
    step: u64,
) -> Result<ChunkOut, TrainError> {
    let inv_b = 1.0 / batch as f64;
    let mut tape = Tape::new();
    let vars = field.layout().register(&mut tape, field.params());
    let depth_on = cfg.lambda_depth > 0.0;
    let normals_on = cfg.lambda_normals > 0.0;
    let mut tangents = Vec::new();
    let mut depth_dirs = None;
    if depth_on {
        match cfg.variant {
            DepthVariant::SimplifiedOrtho => {
                tangents.extend(reg::frame_tangents(rays)?);
                depth_dirs = Some([0, 1]);
            }
            DepthVariant::FullJacobian => {
                let mut tx = Vec::with_capacity(rays.len());
                let mut ty = Vec::with_capacity(rays.len());
                for p in pixels {
                    let j = ds.cameras[p.view].pixel_jacobian(p.x as f64, p.y as f64).map_err(LossError::from)?;
                    tx.push((j.origin[0], j.direction[0]));
                    ty.push((j.origin[1], j.direction[1]));
                }
                tangents.push(tx);
                tangents.push(ty);
                depth_dirs = Some([0, 1]);
            }
            DepthVariant::FiniteDifference => {}
        }
    }
    let normal_dirs = normals_on.then(|| {
        if depth_on && cfg.variant == DepthVariant::SimplifiedOrtho {
            Ok([0, 1])
        } else {
            let k = tangents.len();
            tangents.extend(reg::frame_tangents(rays)?);
            Ok::<_, LossError>([k, k + 1])
        }
    });
    let normal_dirs = normal_dirs.transpose()?;
    let rb = RayBatch { rays: rays.to_vec(), t: t.to_vec() };
    let request = JetRequest { tangents, normals: normals_on };
    let out = render::render_batch(&mut tape, field, &vars, &rb, &request, true);
    let target = Tensor::new(rays.len(), 3, targets.iter().flatten().copied().collect());
    let rgb = reg::rgb_loss_tape(&mut tape, out.rgb.expect("rgb requested"), target);
    let rgb = tape.scale(rgb, inv_b);
    let mut terms = vec![LossTerm::new("rgb", tape.scalar(rgb), 0)];
    let mut total = rgb;
    let mut add_term = |tape: &mut Tape, name: &str, v: Var, clipped: usize, w: f64, total: &mut Var| {
        let v = tape.scale(v, inv_b);
        terms.push(LossTerm::new(name, tape.scalar(v), clipped));
        let wv = tape.scale(v, w);
        *total = tape.add(*total, wv);
    };
    if depth_on {
        if let Some(dirs) = depth_dirs {
            let (d, clipped) = reg::depth_loss_tape(&mut tape, &out, dirs, cfg.g_max);
            add_term(&mut tape, "depth", d, clipped, cfg.lambda_depth, &mut total);
        } else {
            let (nb_rays, nb_t, pairs) = fd_neighbours(ds, rays, pixels, t, cfg.fd_step);
            let d = if pairs.is_empty() {
                tape.constant_scalar(0.0)
            } else {
                let nb = RayBatch { rays: nb_rays, t: nb_t };
                let nb_out = render::render_batch(&mut tape, field, &vars, &nb, &JetRequest::default(), false);
                reg::fd_loss_tape(&mut tape, out.depth.value, nb_out.depth.value, &pairs)
            };
            add_term(&mut tape, "depth", d, 0, cfg.lambda_depth, &mut total);
        }
    }
    if let Some(dirs) = normal_dirs {
        let (n, clipped) = reg::normals_loss_tape(&mut tape, &out, dirs, cfg.normals_clip);
        add_term(&mut tape, "normals", n, clipped, cfg.lambda_normals, &mut total);
    }
    let g = backward(&tape, total).map_err(|e| tape_failure(step, e))?;
    Ok(ChunkOut { grads: field.layout().flatten(&g), terms })
}

/// Right and down neighbours at pixel step `h` that stay on the image.
/// Returns their rays, sample depths (shared with the base ray) and the
/// index of the base ray for each.
fn fd_neighbours(ds: &SceneDataset, rays: &[Ray], pixels: &[PixelRef], t: &[Vec<f64>], h: f64) -> (Vec<Ray>, Vec<Vec<f64>>, Vec<usize>) {
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (i, p) in pixels.iter().enumerate() {
        let cam = &ds.cameras[p.view];
        let (x, y) = (p.x as f64, p.y as f64);
        for (nx, ny) in [(x + h, y), (x, y + h)] {
            if nx <= cam.width as f64 - 0.5 && ny <= cam.height as f64 - 0.5 {
                out.0.push(cam.pixel_to_ray(nx, ny).expect("in bounds"));
                out.1.push(t[i].clone());
                out.2.push(i);
            }
        }
        debug_assert_eq!(rays[i].origin, cam.pixel_to_ray(x, y).expect("in bounds").origin);
    }
    out
}

/// Loss terms and summed parameter gradient of the ray terms for one
/// batch.
pub fn ray_objective<F: TapeField + ?Sized>(
    field: &F,
    ds: &SceneDataset,
    rays: &TrainRays,
    t: &[Vec<f64>],
    cfg: &LossConfig,
    chunk: usize,
    step: u64,
) -> Result<(Vec<LossTerm>, Vec<f64>), TrainError> {
    let n = rays.len();
    let starts: Vec<usize> = (0..n).step_by(chunk.max(1)).collect();
    let outs: Vec<Result<ChunkOut, TrainError>> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + chunk).min(n);
            chunk_objective(field, ds, &rays.rays[s..e], &rays.targets[s..e], &rays.pixels[s..e], &t[s..e], cfg, n, step)
        })
        .collect();
    let mut grads = vec![0.0; field.params().len()];
    let mut terms: Vec<LossTerm> = Vec::new();
    for o in outs {
        let o = o?;
        grads.iter_mut().zip(&o.grads).for_each(|(a, b)| *a += b);
        for t in o.terms {
            match terms.iter_mut().find(|x| x.name == t.name) {
                Some(x) => {
                    x.value += t.value;
                    x.clipped += t.clipped;
                }
                None => terms.push(t),
            }
        }
    }
    Ok((terms, grads))
}

/// Eikonal and curvature terms of an SDF model, with their weighted
/// gradient.
pub fn sdf_objective(model: &SdfFieldModel, cc: &CurvatureConfig, seed: u64, step: u64) -> Result<(Vec<LossTerm>, Vec<f64>), TrainError> {
    let mut tape = Tape::new();
    let vars = model.layout.register(&mut tape, &model.params);
    let mut r = rng::stream(seed, "eikonal", step);
    let eik_pts: Vec<V3<f64>> = (0..cc.eikonal_sample_count).map(|_| cc.eikonal_sample_box.sample(&mut r)).collect();
    let eik = curvature::eikonal_tape(&mut tape, model, &vars, &eik_pts);
    let mut terms = vec![LossTerm::new("eikonal", tape.scalar(eik), 0)];
    let mut total = tape.scale(eik, cc.lambda_sdf);
    if cc.lambda_curv > 0.0 {
        let surf = curvature::sample_surface(model, &cc.eikonal_sample_box, cc.surface_sample_count, rng::stream_seed(seed, "surface", step));
        if let Some((c, singular)) = curvature::curvature_loss_tape(&mut tape, model, &vars, &surf.points, cc) {
            terms.push(LossTerm::new("curvature", tape.scalar(c), singular));
            let wc = tape.scale(c, cc.lambda_curv);
            total = tape.add(total, wc);
        } else {
            terms.push(LossTerm::new("curvature", 0.0, 0));
        }
    }
    let g = backward(&tape, total).map_err(|e| tape_failure(step, e))?;
    Ok((terms, model.layout.flatten(&g)))
}

// ---------------------------------------------------------------------------
// Trainer

pub struct Trainer<'a> {
    pub dataset: &'a SceneDataset,
    pub config: TrainConfig,
    pub model: FieldModel,
    pub optimizer: AdamState,
    /// Steps taken.
    pub step: u64,
    pub history: Vec<MetricsRecord>,
    last_report: LossReport,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Io { path: path.display().to_string(), message: e.to_string() }
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a SceneDataset, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        dataset.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        let seed = rng::stream_seed(config.seed, "model", 0);
        let model = match &config.model {
            ModelSpec::Radiance(c) => FieldModel::Radiance(RadianceFieldModel::new(*c, seed)),
            ModelSpec::Sdf(c) => FieldModel::Sdf(SdfFieldModel::new(*c, seed)),
        };
        let n = model.params().len();
        Ok(Self { dataset, config, model, optimizer: AdamState::new(n), step: 0, history: Vec::new(), last_report: LossReport::default() })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(dataset: &'a SceneDataset, config: TrainConfig, ckpt: Checkpoint, history: Vec<MetricsRecord>) -> Result<Self, TrainError> {
        let mut t = Self::new(dataset, config)?;
        if ckpt.model.layout() != t.model.layout() {
            return Err(TrainError::Config("checkpoint architecture differs from the config".into()));
        }
        let n = ckpt.model.params().len();
        let opt = ckpt.optimizer.unwrap_or(OptimizerBlock { m: vec![0.0; n], v: vec![0.0; n] });
        t.model = ckpt.model;
        t.optimizer = AdamState { m: opt.m, v: opt.v, t: ckpt.step };
        t.step = ckpt.step;
        t.history = history.into_iter().filter(|r| r.step <= ckpt.step).collect();
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            seed: self.config.seed,
            step: self.step,
            optimizer: Some(OptimizerBlock { m: self.optimizer.m.clone(), v: self.optimizer.v.clone() }),
        }
    }

    /// Loss terms and gradient at the current parameters for step `step`.
    pub fn objective(&self, step: u64) -> Result<(LossReport, Vec<f64>), TrainError> {
        let cfg = &self.config;
        let rays = sample_ray_batch(self.dataset, cfg.batch_size, cfg.seed, step);
        let mut sr = rng::stream(cfg.seed, "samples", step);
        let t: Vec<Vec<f64>> = rays.rays.iter().map(|r| render::sample_depths(r.t_near, r.t_far, cfg.samples_per_ray, cfg.sampling, &mut sr)).collect();
        let (mut terms, mut grads) = ray_objective(&self.model, self.dataset, &rays, &t, &cfg.loss, cfg.chunk_rays, step)?;
        if let (FieldModel::Sdf(m), Some(cc)) = (&self.model, &cfg.curvature) {
            let (extra, g) = sdf_objective(m, cc, cfg.seed, step)?;
            terms.extend(extra);
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let report = reg::compose_weighted(|n| cfg.weight(n), &terms)?;
        Ok((report, grads))
    }

    /// One optimizer step. On error the trainer state is unchanged.
    pub fn step(&mut self) -> Result<LossReport, TrainError> {
        let s = self.step;
        let (report, grads) = self.objective(s)?;
        if !report.total.is_finite() {
            return Err(tape_failure(s, format!("loss is {}", report.total)));
        }
        let lr = self.config.lr_at(s);
        adam_step(self.model.params_mut(), &grads, &mut self.optimizer, &self.config.adam, lr).map_err(|e| tape_failure(s, e))?;
        self.step += 1;
        self.last_report = report.clone();
        Ok(report)
    }

    /// Mean photometric loss per ray on the fixed probe rays.
    pub fn probe_rgb(&self) -> f64 {
        let cfg = &self.config;
        let n = cfg.probe_rays.max(1);
        let rays = sample_ray_batch(self.dataset, n, cfg.seed, u64::MAX);
        let t = render::uniform_depths(rays.rays[0].t_near, rays.rays[0].t_far, cfg.samples_per_ray);
        let starts: Vec<usize> = (0..n).step_by(cfg.chunk_rays).collect();
        let parts: Vec<f64> = starts
            .par_iter()
            .map(|&s| {
                let e = (s + cfg.chunk_rays).min(n);
                let batch = RayBatch { rays: rays.rays[s..e].to_vec(), t: rays.rays[s..e].iter().map(|r| render::uniform_depths(r.t_near, r.t_far, t.len())).collect() };
                let mut tape = Tape::new();
                let vars = self.model.layout().register(&mut tape, self.model.params());
                let out = render::render_batch(&mut tape, &self.model, &vars, &batch, &JetRequest::default(), true);
                let target = Tensor::new(e - s, 3, rays.targets[s..e].iter().flatten().copied().collect());
                let l = reg::rgb_loss_tape(&mut tape, out.rgb.expect("rgb"), target);
                tape.scalar(l)
            })
            .collect();
        parts.iter().sum::<f64>() / n as f64
    }

    pub fn evaluate(&self) -> MetricsRecord {
        let views = evaluate_views(&self.model, self.dataset, &self.dataset.test, self.config.samples_per_ray, self.config.chunk_rays);
        MetricsRecord {
            step: self.step,
            loss: self.last_report.clone(),
            probe_rgb: self.probe_rgb(),
            psnr: mean(views.iter().map(|v| v.psnr)),
            ssim: mean(views.iter().filter_map(|v| v.ssim)),
            depth_mae: mean(views.iter().filter_map(|v| v.depth_mae)),
            roughness: mean(views.iter().filter_map(|v| v.roughness)),
            roughness_full: mean(views.iter().map(|v| v.roughness_full)),
        }
    }

    fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        self.checkpoint().save(path).map_err(|e| io_err(path, e))
    }

    /// Runs to `config.steps`. With `out`, writes `metrics.csv` at every
    /// evaluation, periodic `step_NNNNNN.ckpt` files and `final.ckpt`; on
    /// divergence the last good state goes to `last_good.ckpt`.
    pub fn run(&mut self, out: Option<&Path>) -> Result<(), TrainError> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        while self.step < self.config.steps {
            if let Err(e) = self.step() {
                let TrainError::Diverged { step, reason, .. } = e else { return Err(e) };
                let checkpoint = match out {
                    Some(dir) => {
                        let p = dir.join("last_good.ckpt");
                        self.save_checkpoint(&p)?;
                        Some(p)
                    }
                    None => None,
                };
                log::error!("diverged at step {step}: {reason}");
                return Err(TrainError::Diverged { step, reason, checkpoint });
            }
            let s = self.step;
            if s % self.config.eval_every == 0 || s == self.config.steps {
                let rec = self.evaluate();
                log::info!("step {s}: loss {:.6} probe_rgb {:.6} psnr {:?}", rec.loss.total, rec.probe_rgb, rec.psnr);
                self.history.push(rec);
                if let Some(dir) = out {
                    let p = dir.join("metrics.csv");
                    std::fs::write(&p, metrics_csv(&self.history)).map_err(|e| io_err(&p, e))?;
                }
            }
            if let Some(dir) = out {
                if self.config.checkpoint_every > 0 && s % self.config.checkpoint_every == 0 {
                    self.save_checkpoint(&dir.join(format!("step_{s:06}.ckpt")))?;
                }
            }
        }
        if let Some(dir) = out {
            self.save_checkpoint(&dir.join("final.ckpt"))?;
        }
        Ok(())
    }
}

/// Parses a metrics CSV written by [`metrics_csv`] back into records.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_COLUMNS.join(",").as_str()) {
        return Err("unexpected metrics header".into());
    }
    let f = |s: &str| -> Result<Option<f64>, String> { if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|e| format!("{s:?}: {e}")) } };
    lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != CSV_COLUMNS.len() {
                return Err(format!("expected {} columns in {l:?}", CSV_COLUMNS.len()));
            }
            let mut loss = LossReport { total: f(c[1])?.unwrap_or(0.0), ..Default::default() };
            for (k, name) in CSV_COLUMNS.iter().enumerate().take(7).skip(2) {
                if let Some(v) = f(c[k])? {
                    loss.terms.insert(name.to_string(), v);
                }
            }
            Ok(MetricsRecord {
                step: c[0].parse().map_err(|e| format!("step: {e}"))?,
                loss,
                probe_rgb: f(c[7])?.unwrap_or(0.0),
                psnr: f(c[8])?,
                ssim: f(c[9])?,
                depth_mae: f(c[10])?,
                roughness: f(c[11])?,
                roughness_full: f(c[12])?,
            })
        })
        .collect()
}
