//! Oracle checks comparing the differentiable operators against finite
//! differences and closed forms, collected into a machine-readable report.

use rand::Rng as _;
use serde::Serialize;

use crate::autodiff::{gradient, hessian, ScalarMap};
use crate::camera::{ray_frame, Ray};
use crate::curvature::{self, curvature_from_derivatives, CurvatureKind, SdfVolume};
use crate::field::{DensityMap, FieldModel, SdfField, SdfMap, VolumeField};
use crate::linalg::{self, M3, V3};
use crate::regularization as reg;
use crate::render::{self, uniform_depths};
use crate::rng;
use crate::scene::{AnalyticScene, Primitive};

/// Central-difference gradient of `f` with step `h`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += h;
            m[k] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian of `f` from function values only.
pub fn central_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let at = |da: (usize, f64), db: (usize, f64)| {
        let mut p = x.to_vec();
        p[da.0] += da.1;
        p[db.0] += db.1;
        f(&p)
    };
    let f0 = f(x);
    let mut hm = vec![vec![0.0; n]; n];
    for a in 0..n {
        hm[a][a] = (at((a, h), (a, 0.0)) - 2.0 * f0 + at((a, -h), (a, 0.0))) / (h * h);
        for b in (a + 1)..n {
            let v = (at((a, h), (b, h)) - at((a, h), (b, -h)) - at((a, -h), (b, h)) + at((a, -h), (b, -h))) / (4.0 * h * h);
            hm[a][b] = v;
            hm[b][a] = v;
        }
    }
    hm
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst measured error.
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn below(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: measured.is_finite() && measured < tolerance, measured, tolerance, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub target: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn new(target: impl Into<String>, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { target: target.into(), passed, checks }
    }
}

fn random_unit(r: &mut rng::Rng) -> V3<f64> {
    loop {
        let v: V3<f64> = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let n = linalg::norm(&v);
        if n > 0.1 && n <= 1.0 {
            return linalg::scale(&v, 1.0 / n);
        }
    }
}

/// `‖g‖² - ⟨g,v⟩²`, `‖g - ⟨g,v⟩v‖²` and the ray-frame form agree.
pub fn check_loss_identity(pairs: &[(V3<f64>, V3<f64>)], name: &str) -> Check {
    let mut worst: f64 = 0.0;
    for (g, v) in pairs {
        let fr = ray_frame(v).expect("unit direction");
        let a = reg::difference_sq_norm(g, v);
        let b = reg::projected_sq_norm(g, v);
        let c = reg::frame_sq_norm(g, &fr.i, &fr.j);
        worst = worst.max((a - b).abs()).max((b - c).abs());
    }
    Check::below(name, worst, 1e-12, format!("{} gradient/direction pairs", pairs.len()))
}

pub fn random_identity_pairs(n: usize, seed: u64) -> Vec<(V3<f64>, V3<f64>)> {
    let mut r = rng::stream(seed, "identity", 0);
    (0..n)
        .map(|_| {
            let g: V3<f64> = std::array::from_fn(|_| r.random_range(-1.0..1.0));
            (g, random_unit(&mut r))
        })
        .collect()
}

/// Rays from random points on a sphere of radius `dist` aimed near the
/// origin.
pub fn probe_rays(n: usize, dist: f64, seed: u64) -> Vec<Ray> {
    let mut r = rng::stream(seed, "probe-rays", 0);
    (0..n)
        .map(|_| {
            let o = linalg::scale(&random_unit(&mut r), dist);
            let target: V3<f64> = std::array::from_fn(|_| r.random_range(-0.3..0.3));
            Ray::new(o, linalg::normalize(&linalg::sub(&target, &o)), 0.05 * dist, 2.0 * dist)
        })
        .collect()
}

/// The depth regularizer is the same for the canonical ray frame and a
/// rotated one.
pub fn check_frame_independence<F: VolumeField + ?Sized>(field: &F, rays: &[Ray], samples: usize) -> Check {
    let mut worst: f64 = 0.0;
    for (k, ray) in rays.iter().enumerate() {
        let t = uniform_depths(ray.t_near, ray.t_far, samples);
        let fr = ray_frame(&ray.direction).expect("unit");
        let th = 0.3 + 0.1 * k as f64;
        let i2 = linalg::add(&linalg::scale(&fr.i, th.cos()), &linalg::scale(&fr.j, th.sin()));
        let j2 = linalg::cross(&ray.direction, &i2);
        let d = |u: &V3<f64>| render::render_depth_derivative(field, ray, &t, u).unwrap_or(f64::NAN);
        let a = d(&fr.i).powi(2) + d(&fr.j).powi(2);
        let b = d(&i2).powi(2) + d(&j2).powi(2);
        worst = worst.max((a - b).abs());
    }
    Check::below("frame_independence", worst, 1e-10, format!("{} rays, two frames each", rays.len()))
}

/// The three forms of the depth regularizer agree on rendered rays.
pub fn check_rendered_identity<F: VolumeField + ?Sized>(field: &F, rays: &[Ray], samples: usize) -> Check {
    let pairs: Vec<(V3<f64>, V3<f64>)> = rays
        .iter()
        .map(|ray| {
            let t = uniform_depths(ray.t_near, ray.t_far, samples);
            (render::depth_origin_gradient(field, ray, &t).unwrap_or([f64::NAN; 3]), ray.direction)
        })
        .collect();
    check_loss_identity(&pairs, "loss_identity_rendered")
}

/// Forward-mode gradient against central differences. `omega` is the
/// highest spatial frequency of the map; steps shrink with it.
pub fn check_gradient_fd<M: ScalarMap>(map: &M, points: &[V3<f64>], omega: f64, name: &str) -> Check {
    let h = 1e-4 / omega.max(1.0);
    let mut worst: f64 = 0.0;
    for x in points {
        let g = gradient(map, x).unwrap_or(vec![f64::NAN; 3]);
        let fd = central_gradient(|p| map.call(p), x, h);
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3);
        for k in 0..3 {
            worst = worst.max((g[k] - fd[k]).abs() / scale);
        }
    }
    Check::below(name, worst, 1e-5, format!("{} points, h = {h:.1e}, relative to max |g|", points.len()))
}

/// Forward-mode Hessian against central differences of values.
pub fn check_hessian_fd<M: ScalarMap>(map: &M, points: &[V3<f64>], omega: f64, name: &str) -> Check {
    let h = 1e-3 / omega.max(1.0);
    let mut worst: f64 = 0.0;
    for x in points {
        let hm = hessian(map, x).unwrap_or(vec![vec![f64::NAN; 3]; 3]);
        let fd = central_hessian(|p| map.call(p), x, h);
        let scale = fd.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for a in 0..3 {
            for b in 0..3 {
                worst = worst.max((hm[a][b] - fd[a][b]).abs() / scale);
            }
        }
    }
    Check::below(name, worst, 1e-4, format!("{} points, h = {h:.1e}, relative to max(|H|, 1)", points.len()))
}

/// Adjugate-path curvature against the same formula fed with
/// finite-difference derivatives.
pub fn check_curvature_fd<F: SdfField + ?Sized>(field: &F, points: &[V3<f64>], kind: CurvatureKind, name: &str) -> Check {
    let mut worst: f64 = 0.0;
    let f = |p: &[f64]| field.sdf(&[p[0], p[1], p[2]]);
    for x in points {
        let k = curvature::curvature(field, x, kind).unwrap_or(f64::NAN);
        let g = central_gradient(f, x, 1e-4);
        let h = central_hessian(f, x, 1e-3);
        let hm: M3<f64> = std::array::from_fn(|r| [h[r][0], h[r][1], h[r][2]]);
        let kf = curvature_from_derivatives(&[g[0], g[1], g[2]], &hm, kind).unwrap_or(f64::NAN);
        worst = worst.max(rel_err(k, kf, 1.0));
    }
    Check::below(name, worst, 1e-3, format!("{} surface points", points.len()))
}

/// Sphere-specific closed forms: `K = 1/R²`, `H = -2/R`.
fn sphere_checks(center: V3<f64>, radius: f64, idx: usize) -> Vec<Check> {
    let sphere = Primitive::Sphere { center, radius };
    struct One(Primitive);
    impl SdfField for One {
        fn sdf<S: crate::Real>(&self, x: &V3<S>) -> S {
            self.0.sdf(x)
        }
    }
    let f = One(sphere);
    let pts: Vec<V3<f64>> =
        crate::field::fibonacci_sphere(32).iter().map(|d| linalg::add(&center, &linalg::scale(d, radius))).collect();
    let mut gk: f64 = 0.0;
    let mut mk: f64 = 0.0;
    for p in &pts {
        gk = gk.max((curvature::gaussian_curvature(&f, p).unwrap_or(f64::NAN) - 1.0 / (radius * radius)).abs());
        mk = mk.max((curvature::mean_curvature(&f, p).unwrap_or(f64::NAN) + 2.0 / radius).abs());
    }
    vec![
        Check::below(&format!("sphere{idx}_gaussian_closed_form"), gk, 1e-6, format!("R = {radius}")),
        Check::below(&format!("sphere{idx}_mean_closed_form"), mk, 1e-6, format!("R = {radius}")),
        check_curvature_fd(&f, &pts, CurvatureKind::Gaussian, &format!("sphere{idx}_gaussian_vs_fd")),
    ]
}

/// Oracle suite for an analytic scene.
pub fn verify_scene(scene: &AnalyticScene, seed: u64) -> VerifyReport {
    let mut checks = Vec::new();
    let mut r = rng::stream(seed, "verify-scene", 0);
    let c = scene.centroid();
    let b = scene.bounding_radius();
    // away from blend regions the scene distance must be exact
    let mut pts = Vec::new();
    while pts.len() < 200 {
        let p: V3<f64> = std::array::from_fn(|k| c[k] + r.random_range(-1.5 * b..1.5 * b));
        let mut ds: Vec<f64> = scene.objects.iter().map(|o| o.shape.sdf(&p)).collect();
        ds.sort_by(f64::total_cmp);
        if ds.len() < 2 || ds[1] - ds[0] > scene.blend + 1e-3 {
            pts.push(p);
        }
    }
    let mut eik: f64 = 0.0;
    for p in &pts {
        let (_, g) = crate::field::sdf_gradient(scene, p);
        eik = eik.max((linalg::norm(&g) - 1.0).abs());
    }
    checks.push(Check::below("scene_eikonal", eik, 1e-6, "max | |∇F| - 1 | away from blends"));
    checks.push(check_gradient_fd(&SdfMap(scene), &pts[..50], 1.0, "scene_gradient_vs_fd"));
    for (k, o) in scene.objects.iter().enumerate() {
        if let Primitive::Sphere { center, radius } = o.shape {
            checks.extend(sphere_checks(center, radius, k));
        }
    }
    checks.push(check_loss_identity(&random_identity_pairs(1000, seed), "loss_identity"));
    let vol = SdfVolume { field: scene, alpha: 10.0, beta: 0.1 };
    let rays: Vec<Ray> = probe_rays(16, 4.0 * b, seed).into_iter().map(|mut r| {
        r.origin = linalg::add(&r.origin, &c);
        r
    }).collect();
    checks.push(check_frame_independence(&vol, &rays, 64));
    checks.push(check_rendered_identity(&vol, &rays, 64));
    VerifyReport::new("analytic scene", checks)
}

fn top_frequency(freqs: usize) -> f64 {
    if freqs == 0 {
        1.0
    } else {
        (1u64 << (freqs - 1)) as f64 * std::f64::consts::PI
    }
}

/// Oracle suite for a learned field.
pub fn verify_model(model: &FieldModel, seed: u64) -> VerifyReport {
    let mut r = rng::stream(seed, "verify-model", 0);
    let pts: Vec<V3<f64>> = (0..20).map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0))).collect();
    let rays = probe_rays(16, 3.0, seed);
    let mut checks = vec![check_loss_identity(&random_identity_pairs(1000, seed), "loss_identity")];
    match model {
        FieldModel::Radiance(m) => {
            let w = top_frequency(m.config.encoding.num_frequencies_position);
            checks.push(check_gradient_fd(&DensityMap(m), &pts, w, "density_gradient_vs_fd"));
            checks.push(check_hessian_fd(&DensityMap(m), &pts, w, "density_hessian_vs_fd"));
            checks.push(check_frame_independence(m, &rays, 32));
            checks.push(check_rendered_identity(m, &rays, 32));
        }
        FieldModel::Sdf(m) => {
            let w = top_frequency(m.config.num_frequencies);
            checks.push(check_gradient_fd(&SdfMap(m), &pts, w, "sdf_gradient_vs_fd"));
            checks.push(check_hessian_fd(&SdfMap(m), &pts, w, "sdf_hessian_vs_fd"));
            let surf = curvature::sample_surface(m, &crate::curvature::Aabb::cube(2.0), 16, seed);
            if !surf.points.is_empty() {
                checks.push(check_curvature_fd(m, &surf.points, CurvatureKind::Gaussian, "gaussian_curvature_vs_fd"));
                checks.push(check_curvature_fd(m, &surf.points, CurvatureKind::Mean, "mean_curvature_vs_fd"));
            }
            checks.push(check_frame_independence(m, &rays, 32));
            checks.push(check_rendered_identity(m, &rays, 32));
        }
    }
    VerifyReport::new("checkpoint", checks)
}
