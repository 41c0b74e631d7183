//! Analytic SDF scenes, a sphere-tracing reference renderer, and synthetic
//! few-view datasets.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{ray_frame, Camera, CameraError, Projection, Ray};
use crate::dataset::SceneDataset;
use crate::field::{sdf_gradient, SdfField};
use crate::imageio::quantize;
use crate::linalg::{self, V3};
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere { center: V3<f64>, radius: f64 },
    /// Box with the given half extents whose edges are rounded by
    /// `rounding` (`0 ≤ rounding ≤ min half extent`).
    Box { center: V3<f64>, half_extents: V3<f64>, #[serde(default)] rounding: f64 },
    /// Half space `n·x ≤ offset`, `n` unit.
    Plane { normal: V3<f64>, offset: f64 },
}

impl Primitive {
    pub fn sdf<S: Real>(&self, x: &V3<S>) -> S {
        match *self {
            Primitive::Sphere { center, radius } => {
                let d = linalg::sub(x, &linalg::lift3(center));
                linalg::norm(&d) - S::lift(radius)
            }
            Primitive::Box { center, half_extents, rounding } => {
                let q: V3<S> = std::array::from_fn(|k| (x[k] - S::lift(center[k])).abs() - S::lift(half_extents[k] - rounding));
                let pos: V3<S> = q.map(|v| v.fmax(S::zero()));
                let s = linalg::norm_sq(&pos);
                let outside = if s.value() > 0.0 { s.sqrt() } else { S::zero() };
                let inside = q[0].fmax(q[1]).fmax(q[2]).fmin(S::zero());
                outside + inside - S::lift(rounding)
            }
            Primitive::Plane { normal, offset } => linalg::dot(x, &linalg::lift3(normal)) - S::lift(offset),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            Primitive::Sphere { radius, .. } if !(radius > 0.0) => Err(format!("sphere radius must be positive, got {radius}")),
            Primitive::Box { half_extents, rounding, .. } => {
                let m = half_extents.iter().cloned().fold(f64::INFINITY, f64::min);
                if !(m > 0.0) || !(0.0..=m).contains(&rounding) {
                    return Err("box needs positive half extents and 0 <= rounding <= min half extent".into());
                }
                Ok(())
            }
            Primitive::Plane { normal, .. } if (linalg::norm(&normal) - 1.0).abs() > 1e-9 => Err("plane normal must be unit".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub shape: Primitive,
    pub albedo: V3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticScene {
    pub objects: Vec<SceneObject>,
    /// Width of the smooth-min blend between objects; 0 is a hard union.
    #[serde(default)]
    pub blend: f64,
    /// Unit vector towards the light.
    pub light: V3<f64>,
}

/// Cubic polynomial smooth minimum (C²); equals `min(a, b)` once
/// `|a - b| ≥ k`.
pub fn smooth_min<S: Real>(a: S, b: S, k: f64) -> S {
    let m = a.fmin(b);
    if k <= 0.0 {
        return m;
    }
    let h = (S::lift(k) - (a - b).abs()).fmax(S::zero()) / S::lift(k);
    m - h * h * h * S::lift(k / 6.0)
}

impl AnalyticScene {
    pub fn sphere(radius: f64) -> Self {
        Self {
            objects: vec![SceneObject { shape: Primitive::Sphere { center: [0.0; 3], radius }, albedo: [0.8, 0.5, 0.3] }],
            blend: 0.0,
            light: linalg::normalize(&[0.3, -0.8, 0.6]),
        }
    }

    /// A sphere resting against a rounded box.
    pub fn two_primitives() -> Self {
        Self {
            objects: vec![
                SceneObject { shape: Primitive::Sphere { center: [-0.35, 0.0, 0.25], radius: 0.55 }, albedo: [0.85, 0.45, 0.25] },
                SceneObject {
                    shape: Primitive::Box { center: [0.45, 0.1, -0.25], half_extents: [0.4, 0.45, 0.35], rounding: 0.1 },
                    albedo: [0.3, 0.55, 0.85],
                },
            ],
            blend: 0.1,
            light: linalg::normalize(&[0.3, -0.8, 0.6]),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.objects.is_empty() {
            return Err("scene needs at least one object".into());
        }
        if !(self.blend >= 0.0) {
            return Err("blend must be >= 0".into());
        }
        if (linalg::norm(&self.light) - 1.0).abs() > 1e-9 {
            return Err("light must be a unit vector".into());
        }
        self.objects.iter().try_for_each(|o| o.shape.validate())
    }

    /// Mean of the bounded primitives' centers.
    pub fn centroid(&self) -> V3<f64> {
        let centers: Vec<V3<f64>> = self
            .objects
            .iter()
            .filter_map(|o| match o.shape {
                Primitive::Sphere { center, .. } | Primitive::Box { center, .. } => Some(center),
                Primitive::Plane { .. } => None,
            })
            .collect();
        if centers.is_empty() {
            return [0.0; 3];
        }
        let s = centers.iter().fold([0.0; 3], |a, c| linalg::add(&a, c));
        linalg::scale(&s, 1.0 / centers.len() as f64)
    }

    /// Radius around [`AnalyticScene::centroid`] enclosing the bounded
    /// primitives (1 if there are none).
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        let r = self
            .objects
            .iter()
            .filter_map(|o| match o.shape {
                Primitive::Sphere { center, radius } => Some(linalg::norm(&linalg::sub(&center, &c)) + radius),
                Primitive::Box { center, half_extents, .. } => Some(linalg::norm(&linalg::sub(&center, &c)) + linalg::norm(&half_extents)),
                Primitive::Plane { .. } => None,
            })
            .fold(0.0, f64::max);
        if r > 0.0 { r } else { 1.0 }
    }

    fn nearest(&self, x: &V3<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, o) in self.objects.iter().enumerate() {
            let d = o.shape.sdf(x);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }
}

/// Scene signed distance: objects combined left to right by smooth min.
pub fn scene_sdf<S: Real>(scene: &AnalyticScene, x: &V3<S>) -> S {
    let mut it = scene.objects.iter();
    let first = it.next().expect("scene has objects").shape.sdf(x);
    it.fold(first, |acc, o| smooth_min(acc, o.shape.sdf(x), scene.blend))
}

impl SdfField for AnalyticScene {
    fn sdf<S: Real>(&self, x: &V3<S>) -> S {
        scene_sdf(self, x)
    }

    /// Albedo of the closest object.
    fn albedo<S: Real>(&self, x: &V3<S>) -> V3<S> {
        linalg::lift3(self.objects[self.nearest(&linalg::value3(x))].albedo)
    }
}

pub const MAX_TRACE_STEPS: usize = 256;
pub const HIT_TOLERANCE: f64 = 1e-5;
pub const AMBIENT: f64 = 0.1;

/// Ground truth for one ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSample {
    pub rgb: V3<f64>,
    /// Ray parameter of the first hit, `t_far` on a miss.
    pub depth: f64,
    /// Outward unit normal, zero on a miss.
    pub normal: V3<f64>,
    pub hit: bool,
}

/// Sphere-traces `ray` against the scene and shades the hit point.
pub fn trace(scene: &AnalyticScene, ray: &Ray) -> OracleSample {
    let miss = OracleSample { rgb: [0.0; 3], depth: ray.t_far, normal: [0.0; 3], hit: false };
    let mut t = ray.t_near;
    let mut hit = false;
    for _ in 0..MAX_TRACE_STEPS {
        let d = scene_sdf(scene, &ray.at(t));
        if d.abs() < HIT_TOLERANCE {
            hit = true;
            break;
        }
        t += d;
        if t > ray.t_far {
            return miss;
        }
    }
    if !hit {
        return miss;
    }
    // Newton polish along the ray
    for _ in 0..3 {
        let (f, g) = sdf_gradient(scene, &ray.at(t));
        let slope = linalg::dot(&g, &ray.direction);
        if f == 0.0 || slope.abs() < 1e-6 {
            break;
        }
        let step = f / slope;
        if step.abs() > 10.0 * HIT_TOLERANCE {
            break;
        }
        t -= step;
    }
    let x = ray.at(t);
    let (_, g) = sdf_gradient(scene, &x);
    let n = linalg::normalize(&g);
    let albedo = scene.objects[scene.nearest(&x)].albedo;
    let lambert = linalg::dot(&n, &scene.light).max(0.0);
    let rgb = albedo.map(|a| (a * lambert + AMBIENT * a).min(1.0));
    OracleSample { rgb, depth: t, normal: n, hit: true }
}

pub fn oracle_render(scene: &AnalyticScene, cam: &Camera, x: f64, y: f64) -> Result<OracleSample, CameraError> {
    Ok(trace(scene, &cam.pixel_to_ray(x, y)?))
}

/// Ground-truth maps for a whole camera, row-major.
pub fn oracle_view(scene: &AnalyticScene, cam: &Camera) -> Vec<OracleSample> {
    (0..cam.pixel_count())
        .into_par_iter()
        .map(|p| oracle_render(scene, cam, (p % cam.width) as f64, (p / cam.width) as f64).expect("pixel in bounds"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetOptions {
    pub n_train: usize,
    pub n_test: usize,
    /// Camera distance from the scene centroid.
    pub radius: f64,
    /// Image width and height in pixels.
    pub resolution: usize,
    pub seed: u64,
    pub projection: Projection,
    /// Horizontal field of view of perspective cameras.
    pub fov_degrees: f64,
    /// Full aperture of the cone holding the training views.
    pub train_cone_degrees: f64,
    /// Axis of the training cone, pointing from the centroid to the cameras.
    pub view_axis: V3<f64>,
    /// Standard deviation of Gaussian pixel noise added before quantization.
    pub noise_std: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_train: 3,
            n_test: 3,
            radius: 4.0,
            resolution: 64,
            seed: 0,
            projection: Projection::Perspective,
            fov_degrees: 40.0,
            train_cone_degrees: 60.0,
            view_axis: [0.0, -1.0, 0.5],
            noise_std: 0.0,
        }
    }
}

impl DatasetOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.resolution == 0 {
            return Err("resolution must be at least 1".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err("n_train and n_test must be at least 1".into());
        }
        if !(self.radius > 0.0 && self.fov_degrees > 0.0 && self.fov_degrees < 180.0) {
            return Err("radius and fov must be positive (fov < 180)".into());
        }
        if !(self.train_cone_degrees > 0.0 && self.train_cone_degrees < 180.0) {
            return Err("train_cone_degrees must lie in (0, 180)".into());
        }
        if !(linalg::norm(&self.view_axis) > 0.0) || !(self.noise_std >= 0.0) {
            return Err("view_axis must be nonzero and noise_std >= 0".into());
        }
        Ok(())
    }
}

/// Directions at polar angles in `[lo, hi]` (radians) from `axis`, spread
/// evenly in azimuth with jitter.
fn cone_directions(axis: &V3<f64>, n: usize, lo: f64, hi: f64, r: &mut rng::Rng) -> Vec<V3<f64>> {
    let frame = ray_frame(axis).expect("nonzero axis");
    let a = linalg::normalize(axis);
    let offset = r.random_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|k| {
            let theta = lo + (hi - lo) * r.random::<f64>().sqrt();
            let slot = std::f64::consts::TAU / n as f64;
            let phi = offset + slot * (k as f64 + r.random_range(-0.25..0.25));
            let lateral = linalg::add(&linalg::scale(&frame.i, phi.cos()), &linalg::scale(&frame.j, phi.sin()));
            linalg::add(&linalg::scale(&a, theta.cos()), &linalg::scale(&lateral, theta.sin()))
        })
        .collect()
}

/// Cameras on a sphere around the scene: training views inside the cone,
/// test views in a ring just outside it.
pub fn place_cameras(scene: &AnalyticScene, opts: &DatasetOptions) -> Result<(Vec<Camera>, Vec<usize>, Vec<usize>), CameraError> {
    let mut r = rng::stream(opts.seed, "cameras", 0);
    let half = opts.train_cone_degrees.to_radians() / 2.0;
    let mut dirs = cone_directions(&opts.view_axis, opts.n_train, 0.0, half, &mut r);
    dirs.extend(cone_directions(&opts.view_axis, opts.n_test, half + 5f64.to_radians(), half + 30f64.to_radians(), &mut r));
    let c = scene.centroid();
    let b = scene.bounding_radius();
    let near = (opts.radius - 1.5 * b).max(0.05 * opts.radius);
    let far = opts.radius + 1.5 * b;
    let res = opts.resolution;
    let focal = match opts.projection {
        Projection::Perspective => (res as f64 / 2.0) / (opts.fov_degrees.to_radians() / 2.0).tan(),
        Projection::Orthographic => res as f64 / (2.2 * b),
    };
    let cams = dirs
        .iter()
        .map(|d| {
            let eye = linalg::add(&c, &linalg::scale(d, opts.radius));
            Camera::look_at(opts.projection, eye, c, [0.0, 0.0, 1.0], focal, res, res, near, far)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cams, (0..opts.n_train).collect(), (opts.n_train..opts.n_train + opts.n_test).collect()))
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid dataset options: {0}")]
    Options(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// Renders ground truth for every camera. Colors are quantized to 8 bits
/// so the in-memory dataset equals what is read back from disk.
pub fn generate_dataset(scene: &AnalyticScene, opts: &DatasetOptions) -> Result<SceneDataset, SceneError> {
    scene.validate().map_err(SceneError::Scene)?;
    opts.validate().map_err(SceneError::Options)?;
    let (cameras, train, test) = place_cameras(scene, opts)?;
    let mut images = Vec::with_capacity(cameras.len());
    let mut depths = Vec::with_capacity(cameras.len());
    let mut normals = Vec::with_capacity(cameras.len());
    for (v, cam) in cameras.iter().enumerate() {
        let view = oracle_view(scene, cam);
        let mut rgb: Vec<V3<f64>> = view.iter().map(|s| s.rgb).collect();
        if opts.noise_std > 0.0 {
            let mut r = rng::stream(opts.seed, "noise", v as u64);
            let nd = Normal::new(0.0, opts.noise_std).expect("finite std");
            for c in rgb.iter_mut().flat_map(|p| p.iter_mut()) {
                *c += nd.sample(&mut r);
            }
        }
        images.push(rgb.iter().map(|p| p.map(|c| quantize(c) as f64 / 255.0)).collect());
        // depth and normals are stored as f32
        depths.push(view.iter().map(|s| s.depth as f32 as f64).collect());
        normals.push(view.iter().map(|s| s.normal.map(|c| c as f32 as f64)).collect());
    }
    Ok(SceneDataset {
        cameras,
        images,
        depths: Some(depths),
        normals: Some(normals),
        train,
        test,
        scene: Some(scene.clone()),
        seed: opts.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_examples() {
        let s = AnalyticScene::sphere(1.0);
        assert_eq!(scene_sdf(&s, &[2.0, 0.0, 0.0]), 1.0);
        let plane = Primitive::Plane { normal: [0.0, 0.0, 1.0], offset: 0.0 };
        assert_eq!(plane.sdf(&[5.0, 5.0, -2.0]), -2.0);
        let b = Primitive::Box { center: [0.0; 3], half_extents: [1.0, 2.0, 3.0], rounding: 0.0 };
        assert_eq!(b.sdf(&[3.0, 0.0, 0.0]), 2.0);
        assert_eq!(b.sdf(&[0.0, 0.0, 0.0]), -1.0);
    }

    #[test]
    fn smooth_min_matches_min_far_apart() {
        assert_eq!(smooth_min(1.0, 3.0, 0.5), 1.0);
        assert!(smooth_min(1.0, 1.0, 0.5) < 1.0);
    }

    #[test]
    fn trace_through_sphere_center() {
        let s = AnalyticScene::sphere(1.0);
        let o = trace(&s, &Ray::new([0.0, 0.0, -3.0], [0.0, 0.0, 1.0], 0.1, 10.0));
        assert!(o.hit);
        assert!((o.depth - 2.0).abs() < 1e-9);
        assert!(linalg::norm(&linalg::sub(&o.normal, &[0.0, 0.0, -1.0])) < 1e-9);
        let m = trace(&s, &Ray::new([0.0, 5.0, -3.0], [0.0, 0.0, 1.0], 0.1, 10.0));
        assert!(!m.hit);
        assert_eq!((m.rgb, m.depth), ([0.0; 3], 10.0));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let json = r#"{"objects":[{"shape":{"kind":"sphere","center":[0,0,0],"radius":1},"albedo":[1,1,1]}],"light":[0,0,1]}"#;
        let s: AnalyticScene = serde_json::from_str(json).unwrap();
        assert!(s.validate().is_ok());
        assert!(serde_json::from_str::<AnalyticScene>(&json.replace("radius", "radus")).is_err());
    }
}
