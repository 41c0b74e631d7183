//! Photometric loss and the geometric regularizers on rendered depth and
//! normals.
//!
//! Every regularizer is a per-ray clipped squared norm `min(q, g_max)`.
//! Depth variants differ in how `q` is obtained:
//!
//! * `simplified_ortho`: `‖∇_o d - ⟨∇_o d, v⟩ v‖²`, the squared origin
//!   gradient of the rendered depth restricted to the plane orthogonal to
//!   the ray, which equals `⟨∇_o d, i⟩² + ⟨∇_o d, j⟩²` for any orthonormal
//!   frame `(i, j)` of that plane.
//! * `full_jacobian`: the squared pixel gradient `‖J_C ∇_ray d‖²` through
//!   the camera's true pixel-to-ray map.
//! * `finite_difference`: squared differences of rendered depths between a
//!   pixel and its right and down neighbours.
//!
//! Pointwise versions work on any [`VolumeField`] with forward-mode duals;
//! the `*_tape` versions act on a [`BatchRender`] for training.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::camera::{ray_frame, Camera, CameraError, Ray};
use crate::field::VolumeField;
use crate::linalg::{self, V3};
use crate::render::{self, BatchRender, RayBatch, RenderError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("length mismatch: {renders} renders vs {targets} targets")]
    LengthMismatch { renders: usize, targets: usize },
    #[error("unknown loss term `{0}`")]
    UnknownTerm(String),
    #[error("invalid loss config: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthVariant {
    FullJacobian,
    #[default]
    SimplifiedOrtho,
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_depth: f64,
    /// Per-ray clip on the squared depth gradient.
    pub g_max: f64,
    pub lambda_normals: f64,
    pub normals_clip: f64,
    pub variant: DepthVariant,
    /// Pixel step of the finite-difference variant.
    pub fd_step: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_depth: 0.0, g_max: 20.0, lambda_normals: 0.0, normals_clip: 20.0, variant: DepthVariant::SimplifiedOrtho, fd_step: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !(nonneg(self.lambda_depth) && nonneg(self.lambda_normals)) {
            return Err(LossError::Config("loss weights must be finite and >= 0".into()));
        }
        if !(self.g_max > 0.0 && self.normals_clip > 0.0 && self.fd_step > 0.0) {
            return Err(LossError::Config("g_max, normals_clip and fd_step must be > 0".into()));
        }
        Ok(())
    }

    pub fn weight(&self, term: &str) -> Result<f64, LossError> {
        match term {
            "rgb" => Ok(1.0),
            "depth" => Ok(self.lambda_depth),
            "normals" => Ok(self.lambda_normals),
            other => Err(LossError::UnknownTerm(other.to_string())),
        }
    }
}

/// One unweighted loss term as handed to [`compose_losses`].
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerm {
    pub name: String,
    pub value: f64,
    pub clipped: usize,
}

impl LossTerm {
    pub fn new(name: &str, value: f64, clipped: usize) -> Self {
        Self { name: name.to_string(), value, clipped }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// Unweighted term values.
    pub terms: BTreeMap<String, f64>,
    /// Rays whose term hit its clip threshold.
    pub clipped: BTreeMap<String, usize>,
}

/// Weighted sum of the terms; the photometric term has weight 1.
pub fn compose_losses(cfg: &LossConfig, terms: &[LossTerm]) -> Result<LossReport, LossError> {
    compose_weighted(|name| cfg.weight(name), terms)
}

/// [`compose_losses`] with an arbitrary weight table.
pub fn compose_weighted(weight: impl Fn(&str) -> Result<f64, LossError>, terms: &[LossTerm]) -> Result<LossReport, LossError> {
    let mut report = LossReport::default();
    for t in terms {
        let w = weight(&t.name)?;
        report.total += w * t.value;
        *report.terms.entry(t.name.clone()).or_insert(0.0) += t.value;
        *report.clipped.entry(t.name.clone()).or_insert(0) += t.clipped;
    }
    Ok(report)
}

/// `Σ ‖c - c_gt‖²`.
pub fn loss_rgb(renders: &[V3<f64>], targets: &[V3<f64>]) -> Result<f64, LossError> {
    if renders.len() != targets.len() {
        return Err(LossError::LengthMismatch { renders: renders.len(), targets: targets.len() });
    }
    Ok(renders.iter().zip(targets).map(|(a, b)| linalg::norm_sq(&linalg::sub(a, b))).sum())
}

/// `min(value, g_max)`; the derivative is 1 up to and including the
/// threshold and 0 above it.
pub fn clip_sq<S: Real>(value: S, g_max: f64) -> S {
    value.fmin(S::lift(g_max))
}

/// `‖g - ⟨g, v⟩ v‖²`.
pub fn projected_sq_norm<S: Real>(g: &V3<S>, v: &V3<S>) -> S {
    let p = linalg::axpy(g, -linalg::dot(g, v), v);
    linalg::norm_sq(&p)
}

/// `‖g‖² - ⟨g, v⟩²`.
pub fn difference_sq_norm<S: Real>(g: &V3<S>, v: &V3<S>) -> S {
    let gv = linalg::dot(g, v);
    linalg::norm_sq(g) - gv * gv
}

/// `⟨g, i⟩² + ⟨g, j⟩²`.
pub fn frame_sq_norm<S: Real>(g: &V3<S>, i: &V3<S>, j: &V3<S>) -> S {
    let a = linalg::dot(g, i);
    let b = linalg::dot(g, j);
    a * a + b * b
}

/// Per-ray `‖P_{v⊥} ∇_o d‖²` before clipping.
pub fn depth_gradient_sq<F: VolumeField + ?Sized>(field: &F, ray: &Ray, t: &[f64]) -> Result<f64, LossError> {
    let g = render::depth_origin_gradient(field, ray, t)?;
    Ok(projected_sq_norm(&g, &ray.direction))
}

/// Same quantity from two directional derivatives along the ray frame.
pub fn depth_gradient_sq_frame<F: VolumeField + ?Sized>(field: &F, ray: &Ray, t: &[f64]) -> Result<f64, LossError> {
    let fr = ray_frame(&ray.direction)?;
    let di = render::render_depth_derivative(field, ray, t, &fr.i)?;
    let dj = render::render_depth_derivative(field, ray, t, &fr.j)?;
    Ok(di * di + dj * dj)
}

/// `Σ_rays clip_sq(‖P_{v⊥} ∇_o d‖², g_max)`.
pub fn loss_depth_simplified<F: VolumeField + ?Sized>(field: &F, batch: &RayBatch, g_max: f64) -> Result<f64, LossError> {
    let mut total = 0.0;
    for (ray, t) in batch.rays.iter().zip(&batch.t) {
        total += clip_sq(depth_gradient_sq(field, ray, t)?, g_max);
    }
    Ok(total)
}

/// Pixel gradient `(∂d/∂x, ∂d/∂y)` of the rendered depth.
pub fn depth_pixel_gradient<F: VolumeField + ?Sized>(field: &F, cam: &Camera, px: [f64; 2], t: &[f64]) -> Result<[f64; 2], LossError> {
    let ray = cam.pixel_to_ray(px[0], px[1])?;
    let jc = cam.pixel_jacobian(px[0], px[1])?;
    let mut g = [0.0; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        *gk = render::render_ray_derivative(field, &ray, t, &jc.origin[k], &jc.direction[k], false)?.depth;
    }
    Ok(g)
}

/// `Σ_pixels clip_sq(‖J_C ∇_ray d‖², g_max)` with fixed sample depths `t`.
pub fn loss_depth_full<F: VolumeField + ?Sized>(field: &F, cam: &Camera, pixels: &[[f64; 2]], t: &[f64], g_max: f64) -> Result<f64, LossError> {
    let mut total = 0.0;
    for &px in pixels {
        let g = depth_pixel_gradient(field, cam, px, t)?;
        total += clip_sq(g[0] * g[0] + g[1] * g[1], g_max);
    }
    Ok(total)
}

/// Finite-difference loss on a depth map: for each listed pixel, the
/// squared differences to its right and down neighbours; neighbours off
/// the map are skipped.
pub fn depth_map_fd_loss(depth: &[f64], width: usize, height: usize, pixels: &[(usize, usize)]) -> f64 {
    let at = |x: usize, y: usize| depth[y * width + x];
    let mut total = 0.0;
    for &(x, y) in pixels {
        let d = at(x, y);
        if x + 1 < width {
            total += (at(x + 1, y) - d).powi(2);
        }
        if y + 1 < height {
            total += (at(x, y + 1) - d).powi(2);
        }
    }
    total
}

/// Finite-difference loss on rendered depths at pixel step `h`: each pixel
/// is compared with the renders at `+h` along x and y.
pub fn loss_depth_regnerf<F: VolumeField + ?Sized>(field: &F, cam: &Camera, pixels: &[[f64; 2]], h: f64, t: &[f64]) -> Result<f64, LossError> {
    let depth = |x: f64, y: f64| -> Result<f64, LossError> { Ok(render::render_ray(field, &cam.pixel_to_ray(x, y)?, t, false)?.depth) };
    let in_bounds = |x: f64, y: f64| x <= cam.width as f64 - 0.5 && y <= cam.height as f64 - 0.5;
    let mut total = 0.0;
    for &[x, y] in pixels {
        let d = depth(x, y)?;
        if in_bounds(x + h, y) {
            total += (depth(x + h, y)? - d).powi(2);
        }
        if in_bounds(x, y + h) {
            total += (depth(x, y + h)? - d).powi(2);
        }
    }
    Ok(total)
}

/// Per-ray `‖∂_i ñ‖² + ‖∂_j ñ‖²` for the rendered normal ñ.
pub fn normal_jacobian_sq<F: VolumeField + ?Sized>(field: &F, ray: &Ray, t: &[f64], frame: (V3<f64>, V3<f64>)) -> Result<f64, LossError> {
    let di = render::render_origin_derivative(field, ray, t, &frame.0, true)?.normal;
    let dj = render::render_origin_derivative(field, ray, t, &frame.1, true)?.normal;
    Ok(linalg::norm_sq(&di) + linalg::norm_sq(&dj))
}

/// `Σ_rays clip_sq(‖J_ñ‖_F², normals_clip)` along each ray's frame.
pub fn loss_normals<F: VolumeField + ?Sized>(field: &F, batch: &RayBatch, clip: f64) -> Result<f64, LossError> {
    let mut total = 0.0;
    for (ray, t) in batch.rays.iter().zip(&batch.t) {
        let fr = ray_frame(&ray.direction)?;
        total += clip_sq(normal_jacobian_sq(field, ray, t, (fr.i, fr.j))?, clip);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Tape versions

/// Tangents `(i, 0)` and `(j, 0)` for the orthographic simplification.
pub fn frame_tangents(rays: &[Ray]) -> Result<Vec<Vec<(V3<f64>, V3<f64>)>>, LossError> {
    let mut ti = Vec::with_capacity(rays.len());
    let mut tj = Vec::with_capacity(rays.len());
    for r in rays {
        let f = ray_frame(&r.direction)?;
        ti.push((f.i, [0.0; 3]));
        tj.push((f.j, [0.0; 3]));
    }
    Ok(vec![ti, tj])
}

/// Tangents given by the rows of each pixel's `J_C`.
pub fn pixel_tangents(cam: &Camera, pixels: &[[f64; 2]]) -> Result<Vec<Vec<(V3<f64>, V3<f64>)>>, LossError> {
    let mut tx = Vec::with_capacity(pixels.len());
    let mut ty = Vec::with_capacity(pixels.len());
    for &[x, y] in pixels {
        let j = cam.pixel_jacobian(x, y)?;
        tx.push((j.origin[0], j.direction[0]));
        ty.push((j.origin[1], j.direction[1]));
    }
    Ok(vec![tx, ty])
}

/// `Σ ‖c - c_gt‖²` on the tape; `target` is `R x 3`.
pub fn rgb_loss_tape(tape: &mut Tape, rgb: Var, target: Tensor) -> Var {
    let t = tape.constant(target);
    let d = tape.sub(rgb, t);
    let sq = tape.square(d);
    tape.sum(sq)
}

/// Clipped per-row sums of squares of `parts` (each `R x 1`), summed over
/// rows. Also returns how many rows were clipped.
pub fn clipped_sum_sq_tape(tape: &mut Tape, parts: &[Var], clip: f64) -> (Var, usize) {
    let mut acc: Option<Var> = None;
    for &p in parts {
        let sq = tape.square(p);
        acc = Some(match acc {
            Some(a) => tape.add(a, sq),
            None => sq,
        });
    }
    let q = acc.expect("at least one part");
    let clipped = tape.value(q).data().iter().filter(|&&v| v > clip).count();
    let c = tape.clip_max(q, clip);
    (tape.sum(c), clipped)
}

/// Depth regularizer from the depth derivatives along tangents `dirs`.
pub fn depth_loss_tape(tape: &mut Tape, render: &BatchRender, dirs: [usize; 2], g_max: f64) -> (Var, usize) {
    let parts = dirs.map(|d| render.depth.first[d]);
    clipped_sum_sq_tape(tape, &parts, g_max)
}

/// Normals regularizer from the normal derivatives along tangents `dirs`.
pub fn normals_loss_tape(tape: &mut Tape, render: &BatchRender, dirs: [usize; 2], clip: f64) -> (Var, usize) {
    let n = render.normal.as_ref().expect("render carries normals");
    let parts: Vec<Var> = n.iter().flat_map(|c| dirs.map(|d| c.first[d])).collect();
    clipped_sum_sq_tape(tape, &parts, clip)
}

/// Finite-difference loss on the tape: `Σ_k (next_k - base_{pairs[k]})²`
/// for `R x 1` depths `base` and `K x 1` depths `next`.
pub fn fd_loss_tape(tape: &mut Tape, base: Var, next: Var, pairs: &[usize]) -> Var {
    let r = tape.shape(base).0;
    let k = pairs.len();
    if k == 0 {
        return tape.constant_scalar(0.0);
    }
    let mut sel = vec![0.0; k * r];
    for (row, &a) in pairs.iter().enumerate() {
        sel[row * r + a] = 1.0;
    }
    let m = tape.constant(Tensor::new(k, r, sel));
    let picked = tape.matmul(m, base);
    let diff = tape.sub(next, picked);
    let sq = tape.square(diff);
    tape.sum(sq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        assert_eq!(clip_sq(4.0, 20.0), 4.0);
        assert_eq!(clip_sq(25.0, 20.0), 20.0);
        let d = clip_sq(crate::autodiff::Dual::new(30.0, 1.0), 20.0);
        assert_eq!(d.tangent, 0.0);
        let d = clip_sq(crate::autodiff::Dual::new(3.0, 1.0), 20.0);
        assert_eq!(d.tangent, 1.0);
    }

    #[test]
    fn rgb_examples() {
        assert_eq!(loss_rgb(&[[0.0; 3]], &[[1.0; 3]]).unwrap(), 3.0);
        assert_eq!(loss_rgb(&[[0.3, 0.2, 0.1]], &[[0.3, 0.2, 0.1]]).unwrap(), 0.0);
        assert!(matches!(loss_rgb(&[[0.0; 3]], &[]), Err(LossError::LengthMismatch { .. })));
    }

    #[test]
    fn projection_examples() {
        let v = [0.0, 0.0, 1.0];
        assert_eq!(projected_sq_norm(&[0.0, 0.0, 7.0], &v), 0.0);
        assert_eq!(clip_sq(projected_sq_norm(&[1.5, -2.0, 9.0], &v), 20.0), 6.25);
    }

    #[test]
    fn fd_map_examples() {
        assert_eq!(depth_map_fd_loss(&[1.0, 3.0], 2, 1, &[(0, 0), (1, 0)]), 4.0);
        assert_eq!(depth_map_fd_loss(&[2.0; 9], 3, 3, &[(0, 0), (1, 1), (2, 2)]), 0.0);
    }

    #[test]
    fn compose_examples() {
        let cfg = LossConfig { lambda_depth: 2e-4, ..LossConfig::default() };
        let r = compose_losses(&cfg, &[LossTerm::new("rgb", 0.5, 0), LossTerm::new("depth", 10.0, 3)]).unwrap();
        assert!((r.total - (0.5 + 2e-3)).abs() < 1e-15);
        assert_eq!(r.clipped["depth"], 3);
        let zero = LossConfig::default();
        assert_eq!(compose_losses(&zero, &[LossTerm::new("rgb", 0.5, 0), LossTerm::new("depth", 10.0, 0)]).unwrap().total, 0.5);
        assert!(matches!(compose_losses(&cfg, &[LossTerm::new("dpeth", 1.0, 0)]), Err(LossError::UnknownTerm(_))));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: LossConfig = serde_json::from_str(r#"{"variant":"simplified_ortho","lambda_depth":2e-4,"g_max":20}"#).unwrap();
        assert_eq!(c.g_max, 20.0);
        assert!(c.validate().is_ok());
        assert!(serde_json::from_str::<LossConfig>(r#"{"lamda_depth":1}"#).is_err());
        assert!(LossConfig { g_max: 0.0, ..c }.validate().is_err());
    }
}
