//! Curvature of implicit surfaces, the Eikonal and curvature losses, and
//! surface-point sampling.
//!
//! With `g = ∇F` and `H` the Hessian of `F`:
//!
//! * mean curvature `-(‖g‖² tr H - gᵀ H g) / ‖g‖³`, the negated divergence
//!   of the unit normal field (the sum of the principal curvatures, so
//!   `-2/R` on a sphere of radius `R`);
//! * Gaussian curvature `gᵀ adj(H) g / ‖g‖⁴`.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{value_gradient_hessian, AutodiffError, Jet, Tape, Tensor, Var};
use crate::field::encoding::encode_jet;
use crate::field::mlp::LayerVars;
use crate::field::{sdf_gradient, SdfField, SdfFieldModel, SdfMap, VolumeField, EPS_NORM};
use crate::linalg::{self, M3, V3};
use crate::rng;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurvatureError {
    #[error("gradient norm {norm:e} below {EPS_NORM:e}; curvature undefined")]
    Singular { norm: f64 },
    #[error("every one of the {count} surface points is singular")]
    AllSingular { count: usize },
    #[error("empty surface point set")]
    Empty,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Mean,
    #[default]
    Gaussian,
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: V3<f64>,
    pub max: V3<f64>,
}

impl Aabb {
    pub fn cube(half: f64) -> Self {
        Self { min: [-half; 3], max: [half; 3] }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|k| self.min[k] < self.max[k])
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> V3<f64> {
        std::array::from_fn(|k| rng.random_range(self.min[k]..self.max[k]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureConfig {
    pub kind: CurvatureKind,
    /// Weight of the curvature term.
    #[serde(rename = "lambda")]
    pub lambda_curv: f64,
    /// Clip applied to `|γ|`.
    #[serde(rename = "kappa")]
    pub kappa_curv: f64,
    /// Weight of the Eikonal term.
    pub lambda_sdf: f64,
    pub surface_sample_count: usize,
    pub eikonal_sample_count: usize,
    pub eikonal_sample_box: Aabb,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self {
            kind: CurvatureKind::Gaussian,
            lambda_curv: 0.0,
            kappa_curv: 5.0,
            lambda_sdf: 0.1,
            surface_sample_count: 64,
            eikonal_sample_count: 128,
            eikonal_sample_box: Aabb::cube(2.0),
        }
    }
}

impl CurvatureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda_curv < 0.0 || self.lambda_sdf < 0.0 {
            return Err("curvature weights must be non-negative".into());
        }
        if !(self.kappa_curv > 0.0) {
            return Err("kappa must be positive".into());
        }
        if !self.eikonal_sample_box.is_valid() {
            return Err("eikonal_sample_box is degenerate".into());
        }
        Ok(())
    }
}

/// Curvature from a gradient and Hessian.
pub fn curvature_from_derivatives<S: Real>(g: &V3<S>, h: &M3<S>, kind: CurvatureKind) -> Result<S, CurvatureError> {
    let n2 = linalg::norm_sq(g);
    let n = n2.sqrt();
    if !(n.value() > EPS_NORM) {
        return Err(CurvatureError::Singular { norm: n.value() });
    }
    Ok(match kind {
        CurvatureKind::Mean => {
            let ghg = linalg::dot(g, &linalg::mat_vec(h, g));
            -(n2 * linalg::trace(h) - ghg) / (n2 * n)
        }
        CurvatureKind::Gaussian => linalg::dot(g, &linalg::mat_vec(&linalg::adjugate(h), g)) / (n2 * n2),
    })
}

fn derivatives<F: SdfField + ?Sized>(field: &F, x: &V3<f64>) -> Result<(f64, V3<f64>, M3<f64>), CurvatureError> {
    let (v, g, h) = value_gradient_hessian(&SdfMap(field), x)?;
    Ok((v, [g[0], g[1], g[2]], std::array::from_fn(|r| [h[r][0], h[r][1], h[r][2]])))
}

pub fn curvature<F: SdfField + ?Sized>(field: &F, x: &V3<f64>, kind: CurvatureKind) -> Result<f64, CurvatureError> {
    let (_, g, h) = derivatives(field, x)?;
    curvature_from_derivatives(&g, &h, kind)
}

pub fn mean_curvature<F: SdfField + ?Sized>(field: &F, x: &V3<f64>) -> Result<f64, CurvatureError> {
    curvature(field, x, CurvatureKind::Mean)
}

pub fn gaussian_curvature<F: SdfField + ?Sized>(field: &F, x: &V3<f64>) -> Result<f64, CurvatureError> {
    curvature(field, x, CurvatureKind::Gaussian)
}

/// Mean of `(‖∇F‖ - 1)²` over `count` uniform samples of `bounds`.
pub fn eikonal_loss<F: SdfField + ?Sized>(field: &F, bounds: &Aabb, count: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, "eikonal", 0);
    let total: f64 = (0..count.max(1))
        .map(|_| {
            let (_, g) = sdf_gradient(field, &bounds.sample(&mut r));
            (linalg::norm(&g) - 1.0).powi(2)
        })
        .sum();
    total / count.max(1) as f64
}

/// Points on (or within tolerance of) the zero level set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfacePointSet {
    pub points: Vec<V3<f64>>,
    pub residuals: Vec<f64>,
    /// Seeds that were projected.
    pub attempted: usize,
    /// Set when fewer than half of the requested points converged.
    pub convergence_warning: bool,
}

pub const PROJECTION_TOLERANCE: f64 = 1e-4;
pub const MAX_PROJECTION_STEPS: usize = 20;

/// Projects one point with `x ← x - F ∇F / ‖∇F‖²`.
pub fn project_to_surface<F: SdfField + ?Sized>(field: &F, mut x: V3<f64>) -> Option<(V3<f64>, f64)> {
    for _ in 0..MAX_PROJECTION_STEPS {
        let (f, g) = sdf_gradient(field, &x);
        let n2 = linalg::norm_sq(&g);
        if !f.is_finite() || !(n2.sqrt() > EPS_NORM) {
            return None;
        }
        if f.abs() < 1e-14 {
            break;
        }
        x = linalg::axpy(&x, -f / n2, &g);
    }
    let f = field.sdf(&x);
    (f.abs() < PROJECTION_TOLERANCE).then_some((x, f.abs()))
}

/// Newton projection from `count` box-uniform seeds; deterministic given
/// `seed`.
pub fn sample_surface<F: SdfField + Sync + ?Sized>(field: &F, bounds: &Aabb, count: usize, seed: u64) -> SurfacePointSet {
    let mut r = rng::stream(seed, "surface", 0);
    let seeds: Vec<V3<f64>> = (0..count).map(|_| bounds.sample(&mut r)).collect();
    let projected: Vec<_> = seeds.into_par_iter().map(|s| project_to_surface(field, s)).collect();
    let mut out = SurfacePointSet { attempted: count, ..Default::default() };
    for p in projected {
        if let Some((p, res)) = p {
            out.points.push(p);
            out.residuals.push(res);
        }
    }
    out.convergence_warning = out.points.len() * 2 < count;
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureLoss {
    pub value: f64,
    /// Points excluded because the gradient vanished there.
    pub singular: usize,
}

/// Mean of `min(|γ|, κ)` over the non-singular points.
pub fn curvature_loss<F: SdfField + ?Sized>(field: &F, pts: &SurfacePointSet, cfg: &CurvatureConfig) -> Result<CurvatureLoss, CurvatureError> {
    if pts.points.is_empty() {
        return Err(CurvatureError::Empty);
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for p in &pts.points {
        match curvature(field, p, cfg.kind) {
            Ok(k) => {
                sum += k.abs().min(cfg.kappa_curv);
                used += 1;
            }
            Err(CurvatureError::Singular { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(CurvatureError::AllSingular { count: pts.points.len() });
    }
    Ok(CurvatureLoss { value: sum / used as f64, singular: pts.points.len() - used })
}

/// `α Ψ_β(-F)` with `Ψ_β` the Laplace CDF of scale `β`.
pub fn sdf_to_density<S: Real>(f: S, alpha: f64, beta: f64) -> S {
    let s = -f / S::lift(beta);
    let half = S::lift(0.5);
    let psi = if s.value() <= 0.0 { half * s.exp() } else { S::one() - half * (-s).exp() };
    psi * S::lift(alpha)
}

/// Volume-renderable view of an SDF.
pub struct SdfVolume<F> {
    pub field: F,
    pub alpha: f64,
    pub beta: f64,
}

impl<F: SdfField> VolumeField for SdfVolume<F> {
    fn radiance<S: Real>(&self, x: &V3<S>, _v: &V3<S>) -> (V3<S>, S) {
        (self.field.albedo(x), self.density(x))
    }

    fn density<S: Real>(&self, x: &V3<S>) -> S {
        sdf_to_density(self.field.sdf(x), self.alpha, self.beta)
    }
}

impl VolumeField for SdfFieldModel {
    fn radiance<S: Real>(&self, x: &V3<S>, _v: &V3<S>) -> (V3<S>, S) {
        (self.albedo(x), self.density(x))
    }

    fn density<S: Real>(&self, x: &V3<S>) -> S {
        sdf_to_density(self.sdf(x), self.config.density_alpha, self.config.density_beta)
    }
}

// ---------------------------------------------------------------------------
// Tape versions used during training

const ALL_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn axis_jet(tape: &mut Tape, model: &SdfFieldModel, vars: &LayerVars, points: &[V3<f64>], second: bool) -> Jet {
    let m = points.len();
    let dirs: Vec<Vec<V3<f64>>> = (0..3)
        .map(|a| {
            let mut e = [0.0; 3];
            e[a] = 1.0;
            vec![e; m]
        })
        .collect();
    let pairs: Arc<[(usize, usize)]> = Arc::from(if second { ALL_PAIRS.to_vec() } else { Vec::new() });
    let (v, f, s) = encode_jet(points, &dirs, &pairs, model.config.num_frequencies, true);
    let pos = Jet::constant(tape, v, f, s, pairs);
    model.forward_tape(tape, vars, &pos, false).sdf
}

fn norm_sq3(tape: &mut Tape, g: &[Var]) -> Var {
    let s0 = tape.square(g[0]);
    let s1 = tape.square(g[1]);
    let s2 = tape.square(g[2]);
    let s = tape.add(s0, s1);
    tape.add(s, s2)
}

/// Mean Eikonal residual over `points`, recorded on the tape.
pub fn eikonal_tape(tape: &mut Tape, model: &SdfFieldModel, vars: &LayerVars, points: &[V3<f64>]) -> Var {
    let f = axis_jet(tape, model, vars, points, false);
    let n2 = norm_sq3(tape, &f.first);
    let n = tape.sqrt(n2);
    let r = tape.shift(n, -1.0);
    let r2 = tape.square(r);
    tape.mean(r2)
}

/// Per-point curvature (`M x 1`) on the tape, with a mask of the points
/// whose gradient norm clears [`EPS_NORM`]. Singular rows hold 0.
pub fn curvature_tape(tape: &mut Tape, model: &SdfFieldModel, vars: &LayerVars, points: &[V3<f64>], kind: CurvatureKind) -> (Var, Vec<bool>) {
    let m = points.len();
    let f = axis_jet(tape, model, vars, points, true);
    let g = &f.first;
    let h = |a: usize, b: usize| f.mixed(a, b).expect("all pairs present");
    let n2 = norm_sq3(tape, g);
    let mask: Vec<bool> = tape.value(n2).data().iter().map(|&v| v.sqrt() > EPS_NORM).collect();
    let maskv = tape.constant(Tensor::new(m, 1, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()));
    // singular rows get a unit denominator and are zeroed by the mask
    let fill = tape.constant(Tensor::new(m, 1, mask.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect()));
    let n2s = tape.add(n2, fill);
    let quad = |tape: &mut Tape, mtx: &dyn Fn(&mut Tape, usize, usize) -> Var| {
        let mut acc: Option<Var> = None;
        for a in 0..3 {
            for b in a..3 {
                let e = mtx(tape, a, b);
                let ga = tape.mul(g[a], g[b]);
                let mut t = tape.mul(e, ga);
                if a != b {
                    t = tape.scale(t, 2.0);
                }
                acc = Some(match acc {
                    Some(x) => tape.add(x, t),
                    None => t,
                });
            }
        }
        acc.unwrap()
    };
    let value = match kind {
        CurvatureKind::Mean => {
            let tr0 = tape.add(h(0, 0), h(1, 1));
            let tr = tape.add(tr0, h(2, 2));
            let ghg = quad(tape, &|_, a, b| h(a, b));
            let num = tape.mul(n2, tr);
            let num = tape.sub(num, ghg);
            let n = tape.sqrt(n2s);
            let den = tape.mul(n2s, n);
            let q = tape.div(num, den);
            tape.neg(q)
        }
        CurvatureKind::Gaussian => {
            let cof = |tape: &mut Tape, a: usize, b: usize| -> Var {
                // adj(H)_ab for symmetric H
                let (p, q, r, s) = match (a, b) {
                    (0, 0) => ((1, 1), (2, 2), (1, 2), (1, 2)),
                    (1, 1) => ((0, 0), (2, 2), (0, 2), (0, 2)),
                    (2, 2) => ((0, 0), (1, 1), (0, 1), (0, 1)),
                    (0, 1) => ((0, 2), (1, 2), (0, 1), (2, 2)),
                    (0, 2) => ((0, 1), (1, 2), (0, 2), (1, 1)),
                    (1, 2) => ((0, 1), (0, 2), (0, 0), (1, 2)),
                    _ => unreachable!(),
                };
                let x = tape.mul(h(p.0, p.1), h(q.0, q.1));
                let y = tape.mul(h(r.0, r.1), h(s.0, s.1));
                tape.sub(x, y)
            };
            let gag = quad(tape, &cof);
            let den = tape.square(n2s);
            tape.div(gag, den)
        }
    };
    (tape.mul(value, maskv), mask)
}

/// `mean(min(|γ|, κ))` over non-singular points on the tape.
pub fn curvature_loss_tape(tape: &mut Tape, model: &SdfFieldModel, vars: &LayerVars, points: &[V3<f64>], cfg: &CurvatureConfig) -> Option<(Var, usize)> {
    if points.is_empty() {
        return None;
    }
    let (k, mask) = curvature_tape(tape, model, vars, points, cfg.kind);
    let used = mask.iter().filter(|&&b| b).count();
    if used == 0 {
        return None;
    }
    let a = tape.abs(k);
    let c = tape.clip_max(a, cfg.kappa_curv);
    let s = tape.sum(c);
    Some((tape.scale(s, 1.0 / used as f64), points.len() - used))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Sphere(f64);
    impl SdfField for Sphere {
        fn sdf<S: Real>(&self, x: &V3<S>) -> S {
            linalg::norm(x) - S::lift(self.0)
        }
    }

    struct Plane;
    impl SdfField for Plane {
        fn sdf<S: Real>(&self, x: &V3<S>) -> S {
            x[0]
        }
    }

    struct Doubled;
    impl SdfField for Doubled {
        fn sdf<S: Real>(&self, x: &V3<S>) -> S {
            x[0] * S::lift(2.0)
        }
    }

    #[test]
    fn plane_has_zero_curvature() {
        for kind in [CurvatureKind::Mean, CurvatureKind::Gaussian] {
            assert_eq!(curvature(&Plane, &[0.0, 0.3, -1.0], kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn sphere_curvatures() {
        let x = [0.0, 2.0, 0.0];
        assert!((gaussian_curvature(&Sphere(2.0), &x).unwrap() - 0.25).abs() < 1e-12);
        assert!((mean_curvature(&Sphere(2.0), &x).unwrap().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eikonal_of_linear_fields() {
        let b = Aabb::cube(1.0);
        assert_eq!(eikonal_loss(&Plane, &b, 10, 0), 0.0);
        assert!((eikonal_loss(&Doubled, &b, 10, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_loss_clips() {
        let pts = sample_surface(&Sphere(2.0), &Aabb::cube(3.0), 20, 1);
        let mut cfg = CurvatureConfig { kind: CurvatureKind::Gaussian, kappa_curv: 1.0, ..Default::default() };
        assert!((curvature_loss(&Sphere(2.0), &pts, &cfg).unwrap().value - 0.25).abs() < 1e-9);
        cfg.kappa_curv = 0.1;
        assert!((curvature_loss(&Sphere(2.0), &pts, &cfg).unwrap().value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn projection_reaches_sphere() {
        let pts = sample_surface(&Sphere(1.5), &Aabb::cube(3.0), 50, 4);
        assert_eq!(pts.points.len(), 50);
        for p in &pts.points {
            assert!((linalg::norm(p) - 1.5).abs() < 1e-10);
        }
    }

    #[test]
    fn plane_projection_lands_on_plane() {
        let pts = sample_surface(&Plane, &Aabb::cube(3.0), 10, 2);
        assert!(pts.points.iter().all(|p| p[0].abs() < 1e-12));
    }

    #[test]
    fn density_transform() {
        assert_eq!(sdf_to_density(0.0, 4.0, 0.1), 2.0);
        assert!(sdf_to_density(50.0, 4.0, 0.1) < 1e-100);
        let mut prev = f64::INFINITY;
        for k in -100..=100 {
            let s = sdf_to_density(k as f64 * 0.01, 3.0, 0.05);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn tape_curvature_matches_pointwise() {
        let model = SdfFieldModel::new(crate::field::SdfConfig { depth: 3, width: 16, skip_layer: None, ..Default::default() }, 7);
        let pts = [[0.9, 0.2, -0.3], [0.1, -0.8, 0.5], [-0.4, 0.4, 0.7]];
        for kind in [CurvatureKind::Mean, CurvatureKind::Gaussian] {
            let mut tape = Tape::new();
            let vars = model.layout.register(&mut tape, &model.params);
            let (k, mask) = curvature_tape(&mut tape, &model, &vars, &pts, kind);
            assert!(mask.iter().all(|&b| b));
            for (r, p) in pts.iter().enumerate() {
                let want = curvature(&model, p, kind).unwrap();
                let got = tape.value(k).get(r, 0);
                assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{kind:?} {got} vs {want}");
            }
        }
    }

    #[test]
    fn tape_losses_have_finite_difference_parameter_gradients() {
        let cfg = crate::field::SdfConfig { depth: 2, width: 4, skip_layer: None, ..Default::default() };
        let model = SdfFieldModel::new(cfg.clone(), 3);
        let pts = [[0.9, 0.2, -0.3], [0.1, -0.8, 0.5], [-0.4, 0.4, 0.7], [0.3, 0.3, 0.3]];
        let cc = CurvatureConfig { kappa_curv: 100.0, ..CurvatureConfig::default() };
        // `None` is the eikonal term
        for case in [None, Some(CurvatureKind::Mean), Some(CurvatureKind::Gaussian)] {
            let mut tape = Tape::new();
            let vars = model.layout.register(&mut tape, &model.params);
            let out = match case {
                None => eikonal_tape(&mut tape, &model, &vars, &pts),
                Some(kind) => curvature_loss_tape(&mut tape, &model, &vars, &pts, &CurvatureConfig { kind, ..cc }).unwrap().0,
            };
            let g = model.layout.flatten(&crate::autodiff::backward(&tape, out).unwrap());
            let f = |p: &[f64]| {
                let m = SdfFieldModel::from_params(cfg.clone(), p.to_vec()).unwrap();
                let per_point = |x: &V3<f64>| match case {
                    None => (linalg::norm(&sdf_gradient(&m, x).1) - 1.0).powi(2),
                    Some(kind) => curvature(&m, x, kind).unwrap().abs(),
                };
                pts.iter().map(per_point).sum::<f64>() / pts.len() as f64
            };
            let h = 1e-5;
            let fd: Vec<f64> = (0..model.params.len())
                .map(|k| {
                    let (mut a, mut b) = (model.params.clone(), model.params.clone());
                    a[k] += h;
                    b[k] -= h;
                    (f(&a) - f(&b)) / (2.0 * h)
                })
                .collect();
            let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let err = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err < 1e-6 * scale, "{case:?}: {err} vs scale {scale}");
        }
    }
}
