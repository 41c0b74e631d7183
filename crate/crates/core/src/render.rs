//! Ray sampling and emission-absorption compositing.
//!
//! Weights are `w_i = T_i α_i` with `α_i = 1 - exp(-σ_i δ_i)` and
//! `T_i = exp(-Σ_{j<i} σ_j δ_j)`; the last segment ends at `t_far`.
//! Color, depth and normal are the `w`-weighted sums of the per-sample
//! values. Nothing is added for the background, so a transparent ray has
//! depth 0.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::jet::{self, Jet};
use crate::autodiff::{Dual, Tape, Tensor, Var};
use crate::camera::{Camera, Ray};
use crate::field::encoding::{encode, encode_jet};
use crate::field::mlp::{LayerVars, Layout};
use crate::field::{density_normal, FieldModel, RadianceFieldModel, SdfFieldModel, VolumeField, EPS_NORM};
use crate::linalg::{self, V3};
use crate::rng::{self, Rng};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("non-finite {what} at sample {index}")]
    NonFinite { index: usize, what: &'static str },
    #[error("a ray needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("sample depths must be strictly increasing inside [t_near, t_far]")]
    BadSamples,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Bin midpoints.
    #[default]
    Uniform,
    /// One uniform draw per bin.
    Stratified,
}

/// `n` depths in `[t_near, t_far]`, one per equal-width bin.
pub fn sample_depths(t_near: f64, t_far: f64, n: usize, mode: SamplingMode, rng: &mut Rng) -> Vec<f64> {
    let w = (t_far - t_near) / n as f64;
    (0..n)
        .map(|i| {
            let u = match mode {
                SamplingMode::Uniform => 0.5,
                SamplingMode::Stratified => rng.random::<f64>(),
            };
            t_near + (i as f64 + u) * w
        })
        .collect()
}

/// Bin midpoints.
pub fn uniform_depths(t_near: f64, t_far: f64, n: usize) -> Vec<f64> {
    let w = (t_far - t_near) / n as f64;
    (0..n).map(|i| t_near + (i as f64 + 0.5) * w).collect()
}

pub fn sample_ray(ray: &Ray, n: usize, mode: SamplingMode, seed: u64) -> Result<Vec<f64>, RenderError> {
    if n < 2 {
        return Err(RenderError::TooFewSamples { min: 2, got: n });
    }
    Ok(sample_depths(ray.t_near, ray.t_far, n, mode, &mut rng::stream(seed, "samples", 0)))
}

/// Segment lengths `δ_i = t_{i+1} - t_i`, with `δ_N = t_far - t_N`.
pub fn segment_lengths(t: &[f64], t_far: f64) -> Vec<f64> {
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&last) = t.last() {
        d.push(t_far - last);
    }
    d
}

fn check_depths(t: &[f64], t_far: f64) -> Result<(), RenderError> {
    if t.is_empty() {
        return Err(RenderError::TooFewSamples { min: 1, got: 0 });
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) || !(t[t.len() - 1] < t_far) {
        return Err(RenderError::BadSamples);
    }
    Ok(())
}

/// Per-sample quantities along one ray.
#[derive(Clone, Debug)]
pub struct SampleSet<S> {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<S>,
    pub color: Vec<V3<S>>,
    pub normal: Vec<V3<S>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOutput<S = f64> {
    pub color: V3<S>,
    pub depth: S,
    /// Raw weighted normal sum (not renormalized).
    pub normal: V3<S>,
    pub opacity: S,
}

impl<S: Real> RenderOutput<S> {
    pub fn value(&self) -> RenderOutput<f64> {
        RenderOutput {
            color: linalg::value3(&self.color),
            depth: self.depth.value(),
            normal: linalg::value3(&self.normal),
            opacity: self.opacity.value(),
        }
    }
}

/// Transmittance before each sample and the compositing weights.
pub fn weights<S: Real>(sigma: &[S], delta: &[f64]) -> (Vec<S>, Vec<S>) {
    let mut trans = Vec::with_capacity(sigma.len());
    let mut w = Vec::with_capacity(sigma.len());
    let mut t = S::one();
    for (&s, &d) in sigma.iter().zip(delta) {
        let survive = (-(s * S::lift(d))).exp();
        trans.push(t);
        w.push(t * (S::one() - survive));
        t *= survive;
    }
    (trans, w)
}

pub fn composite<S: Real>(samples: &SampleSet<S>) -> Result<RenderOutput<S>, RenderError> {
    let n = samples.t.len();
    if n == 0 {
        return Err(RenderError::TooFewSamples { min: 1, got: 0 });
    }
    for i in 0..n {
        if !samples.sigma[i].all_finite() {
            return Err(RenderError::NonFinite { index: i, what: "density" });
        }
        if !samples.color[i].iter().all(|c| c.all_finite()) {
            return Err(RenderError::NonFinite { index: i, what: "color" });
        }
    }
    let (_, w) = weights(&samples.sigma, &samples.delta);
    let mut out = RenderOutput { color: [S::zero(); 3], depth: S::zero(), normal: [S::zero(); 3], opacity: S::zero() };
    for i in 0..n {
        out.opacity += w[i];
        out.depth += w[i] * S::lift(samples.t[i]);
        for k in 0..3 {
            out.color[k] += w[i] * samples.color[i][k];
            out.normal[k] += w[i] * samples.normal[i][k];
        }
    }
    Ok(out)
}

/// Renders one ray at fixed sample depths `t`; samples move rigidly with
/// the ray, so derivatives with respect to the origin hold `t` fixed.
/// Degenerate per-sample normals contribute zero.
pub fn render_ray<S: Real, F: VolumeField + ?Sized>(field: &F, ray: &Ray<S>, t: &[f64], with_normals: bool) -> Result<RenderOutput<S>, RenderError> {
    check_depths(t, ray.t_far)?;
    let n = t.len();
    let mut set = SampleSet {
        t: t.to_vec(),
        delta: segment_lengths(t, ray.t_far),
        sigma: Vec::with_capacity(n),
        color: Vec::with_capacity(n),
        normal: Vec::with_capacity(n),
    };
    for &ti in t {
        let x = linalg::axpy(&ray.origin, S::lift(ti), &ray.direction);
        let (c, s) = field.radiance(&x, &ray.direction);
        set.sigma.push(s);
        set.color.push(c);
        set.normal.push(if with_normals { density_normal(field, &x).unwrap_or([S::zero(); 3]) } else { [S::zero(); 3] });
    }
    composite(&set)
}

/// `∂d/∂o · u` with fixed sample depths.
pub fn render_depth_derivative<F: VolumeField + ?Sized>(field: &F, ray: &Ray, t: &[f64], u: &V3<f64>) -> Result<f64, RenderError> {
    Ok(render_origin_derivative(field, ray, t, u, false)?.depth)
}

/// Directional derivative of every rendered quantity when the origin moves
/// along `u`.
pub fn render_origin_derivative<F: VolumeField + ?Sized>(
    field: &F,
    ray: &Ray,
    t: &[f64],
    u: &V3<f64>,
    with_normals: bool,
) -> Result<RenderOutput<f64>, RenderError> {
    render_ray_derivative(field, ray, t, u, &[0.0; 3], with_normals)
}

/// Directional derivative when the origin moves with velocity `du` and the
/// direction with velocity `dv`.
pub fn render_ray_derivative<F: VolumeField + ?Sized>(
    field: &F,
    ray: &Ray,
    t: &[f64],
    du: &V3<f64>,
    dv: &V3<f64>,
    with_normals: bool,
) -> Result<RenderOutput<f64>, RenderError> {
    let seeded: Ray<Dual<f64>> = Ray {
        origin: std::array::from_fn(|k| Dual::new(ray.origin[k], du[k])),
        direction: std::array::from_fn(|k| Dual::new(ray.direction[k], dv[k])),
        t_near: ray.t_near,
        t_far: ray.t_far,
    };
    let out = render_ray(field, &seeded, t, with_normals)?;
    Ok(RenderOutput {
        color: out.color.map(|c| c.tangent),
        depth: out.depth.tangent,
        normal: out.normal.map(|c| c.tangent),
        opacity: out.opacity.tangent,
    })
}

/// `∇_o d` with fixed sample depths.
pub fn depth_origin_gradient<F: VolumeField + ?Sized>(field: &F, ray: &Ray, t: &[f64]) -> Result<V3<f64>, RenderError> {
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        *gk = render_depth_derivative(field, ray, t, &e)?;
    }
    Ok(g)
}

/// Rendered maps for one camera, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<V3<f64>>,
    pub depth: Vec<f64>,
    pub normal: Vec<V3<f64>>,
    pub opacity: Vec<f64>,
}

/// Renders a whole view of any field with uniform samples.
pub fn render_view<F: VolumeField + Sync + ?Sized>(field: &F, cam: &Camera, samples: usize, with_normals: bool) -> Result<RenderedView, RenderError> {
    let t = uniform_depths(cam.near, cam.far, samples);
    let outs: Result<Vec<RenderOutput>, RenderError> = (0..cam.pixel_count())
        .into_par_iter()
        .map(|p| {
            let ray = cam.pixel_to_ray((p % cam.width) as f64, (p / cam.width) as f64).expect("pixel in bounds");
            render_ray(field, &ray, &t, with_normals)
        })
        .collect();
    Ok(collect_view(cam, outs?))
}

fn collect_view(cam: &Camera, outs: Vec<RenderOutput>) -> RenderedView {
    RenderedView {
        width: cam.width,
        height: cam.height,
        rgb: outs.iter().map(|o| o.color).collect(),
        depth: outs.iter().map(|o| o.depth).collect(),
        normal: outs.iter().map(|o| o.normal).collect(),
        opacity: outs.iter().map(|o| o.opacity).collect(),
    }
}

// ---------------------------------------------------------------------------
// Batched rendering on a tape

/// A field that can run a batched forward pass on a [`Tape`].
pub trait TapeField: Sync {
    fn layout(&self) -> &Layout;
    fn params(&self) -> &[f64];
    /// `(frequencies, include_input)` of the position encoding.
    fn position_encoding(&self) -> (usize, bool);
    /// Same for view directions, if the field is view dependent.
    fn direction_encoding(&self) -> Option<(usize, bool)>;
    /// Density jet (`rows x 1`) and, if requested, colors (`rows x 3`).
    fn tape_forward(&self, tape: &mut Tape, vars: &LayerVars, pos: &Jet, dir_enc: Option<Var>, want_rgb: bool) -> (Jet, Option<Var>);
}

impl TapeField for RadianceFieldModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn position_encoding(&self) -> (usize, bool) {
        (self.config.encoding.num_frequencies_position, self.config.encoding.include_input)
    }
    fn direction_encoding(&self) -> Option<(usize, bool)> {
        Some((self.config.encoding.num_frequencies_direction, self.config.encoding.include_input))
    }
    fn tape_forward(&self, tape: &mut Tape, vars: &LayerVars, pos: &Jet, dir_enc: Option<Var>, want_rgb: bool) -> (Jet, Option<Var>) {
        let out = self.forward_tape(tape, vars, pos, if want_rgb { dir_enc } else { None });
        (out.sigma, out.rgb)
    }
}

impl TapeField for SdfFieldModel {
    fn layout(&self) -> &Layout {
        &self.layout
    }
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn position_encoding(&self) -> (usize, bool) {
        (self.config.num_frequencies, true)
    }
    fn direction_encoding(&self) -> Option<(usize, bool)> {
        None
    }
    fn tape_forward(&self, tape: &mut Tape, vars: &LayerVars, pos: &Jet, _dir_enc: Option<Var>, want_rgb: bool) -> (Jet, Option<Var>) {
        let out = self.forward_tape(tape, vars, pos, want_rgb);
        let neg = jet::scale(tape, &out.sdf, -1.0);
        let psi = jet::laplace_cdf(tape, &neg, self.config.density_beta);
        (jet::scale(tape, &psi, self.config.density_alpha), out.albedo)
    }
}

impl TapeField for FieldModel {
    fn layout(&self) -> &Layout {
        FieldModel::layout(self)
    }
    fn params(&self) -> &[f64] {
        FieldModel::params(self)
    }
    fn position_encoding(&self) -> (usize, bool) {
        match self {
            Self::Radiance(m) => m.position_encoding(),
            Self::Sdf(m) => m.position_encoding(),
        }
    }
    fn direction_encoding(&self) -> Option<(usize, bool)> {
        match self {
            Self::Radiance(m) => m.direction_encoding(),
            Self::Sdf(m) => m.direction_encoding(),
        }
    }
    fn tape_forward(&self, tape: &mut Tape, vars: &LayerVars, pos: &Jet, dir_enc: Option<Var>, want_rgb: bool) -> (Jet, Option<Var>) {
        match self {
            Self::Radiance(m) => m.tape_forward(tape, vars, pos, dir_enc, want_rgb),
            Self::Sdf(m) => m.tape_forward(tape, vars, pos, dir_enc, want_rgb),
        }
    }
}

/// Rays with their (fixed) sample depths. Every ray uses the same count.
#[derive(Clone, Debug)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub t: Vec<Vec<f64>>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.t.first().map_or(0, Vec::len)
    }

    /// Sample positions, ray-major.
    pub fn points(&self) -> Vec<V3<f64>> {
        self.rays.iter().zip(&self.t).flat_map(|(r, ts)| ts.iter().map(move |&t| r.at(t))).collect()
    }
}

/// Which spatial derivatives the batched render carries.
#[derive(Clone, Debug, Default)]
pub struct JetRequest {
    /// Per-ray tangent directions. `tangents[d][r]` gives the velocity of
    /// ray `r`'s origin and direction along differentiation direction `d`;
    /// sample `k` then moves by `origin + t_k · direction`.
    pub tangents: Vec<Vec<(V3<f64>, V3<f64>)>>,
    /// Also render normals and their derivatives along every tangent.
    pub normals: bool,
}

/// Result of [`render_batch`]. Derivative components of `depth` follow the
/// requested tangents.
pub struct BatchRender {
    /// `R x 3`.
    pub rgb: Option<Var>,
    /// `R x 1`.
    pub depth: Jet,
    /// `R x 1`.
    pub opacity: Var,
    /// Three `R x 1` components of the raw weighted normal sum.
    pub normal: Option<[Jet; 3]>,
}

/// Renders a batch on `tape`. With normals requested the sample jets carry
/// the three coordinate axes (for `∇σ`) followed by the tangents, and mixed
/// second derivatives between each axis and each tangent.
pub fn render_batch<F: TapeField + ?Sized>(tape: &mut Tape, field: &F, vars: &LayerVars, batch: &RayBatch, request: &JetRequest, want_rgb: bool) -> BatchRender {
    let r = batch.len();
    let n = batch.samples();
    let m = r * n;
    let points = batch.points();
    let n_tan = request.tangents.len();
    let axes = if request.normals { 3 } else { 0 };
    let mut dirs: Vec<Vec<V3<f64>>> = Vec::with_capacity(axes + n_tan);
    for a in 0..axes {
        let mut e = [0.0; 3];
        e[a] = 1.0;
        dirs.push(vec![e; m]);
    }
    for tan in &request.tangents {
        let mut rows = Vec::with_capacity(m);
        for (ray, ts) in batch.t.iter().enumerate() {
            let (dor, ddir) = tan[ray];
            rows.extend(ts.iter().map(|&t| linalg::axpy(&dor, t, &ddir)));
        }
        dirs.push(rows);
    }
    let pairs: Vec<(usize, usize)> =
        if request.normals { (0..n_tan).flat_map(|d| (0..3).map(move |a| (a, axes + d))).collect() } else { Vec::new() };
    let pairs: Arc<[(usize, usize)]> = Arc::from(pairs);
    let (freqs, include) = field.position_encoding();
    let (v, f, s) = encode_jet(&points, &dirs, &pairs, freqs, include);
    let pos = Jet::constant(tape, v, f, s, pairs.clone());
    let dir_enc = match (want_rgb, field.direction_encoding()) {
        (true, Some((df, inc))) => {
            let dim = crate::field::encoding::encoded_dim(3, df, inc);
            let mut data = Vec::with_capacity(m * dim);
            for (ray, ts) in batch.rays.iter().zip(&batch.t) {
                let e = encode(&ray.direction, df, inc);
                for _ in ts {
                    data.extend_from_slice(&e);
                }
            }
            Some(tape.constant(Tensor::new(m, dim, data)))
        }
        _ => None,
    };
    let (sigma, rgb_samples) = field.tape_forward(tape, vars, &pos, dir_enc, want_rgb);

    // compositing weights, all derivative directions
    let deltas: Vec<f64> = batch.rays.iter().zip(&batch.t).flat_map(|(ray, ts)| segment_lengths(ts, ray.t_far)).collect();
    let delta = tape.constant(Tensor::new(r, n, deltas));
    let sig = jet::reshape(tape, &sigma, r, n);
    let sd = jet::mul_const(tape, &sig, delta);
    let c = jet::cumsum_exclusive(tape, &sd);
    let ci = jet::add(tape, &c, &sd);
    let nc = jet::scale(tape, &c, -1.0);
    let nci = jet::scale(tape, &ci, -1.0);
    let e1 = jet::exp(tape, &nc);
    let e2 = jet::exp(tape, &nci);
    let w = jet::sub(tape, &e1, &e2);

    let tangent_ids: Vec<usize> = (axes..axes + n_tan).collect();
    let w_t = w.select(&tangent_ids);
    let tvals = tape.constant(Tensor::new(r, n, batch.t.concat()));
    let wt = jet::mul_const(tape, &w_t, tvals);
    let depth = jet::row_sums(tape, &wt);
    let opacity = tape.row_sums(w.value);

    let rgb = rgb_samples.map(|rgb| {
        let chans: Vec<Var> = (0..3)
            .map(|k| {
                let ck = tape.slice_cols(rgb, k, 1);
                let ck = tape.reshape(ck, r, n);
                let wc = tape.mul(w.value, ck);
                tape.row_sums(wc)
            })
            .collect();
        tape.concat_cols(&chans)
    });

    let normal = request.normals.then(|| {
        let g: Vec<Var> = (0..3).map(|a| sigma.first[a]).collect();
        let gsq: Vec<Var> = g.iter().map(|&x| tape.square(x)).collect();
        let s1 = tape.add(gsq[0], gsq[1]);
        let s2 = tape.add(s1, gsq[2]);
        let norm = tape.sqrt(s2);
        let mask: Vec<f64> = tape.value(norm).data().iter().map(|&v| if v > EPS_NORM { 1.0 } else { 0.0 }).collect();
        let mask = tape.constant(Tensor::new(m, 1, mask));
        let eps = tape.constant_scalar(EPS_NORM);
        let safe = tape.max(norm, eps);
        let inv = tape.recip(safe);
        let inv = tape.mul(inv, mask);
        let inv3 = {
            let sq = tape.square(inv);
            tape.mul(sq, inv)
        };
        // per-tangent Hessian-vector products H u_d
        let hu: Vec<[Var; 3]> = (0..n_tan)
            .map(|d| std::array::from_fn(|a| sigma.mixed(a, axes + d).expect("pair requested")))
            .collect();
        let ghu: Vec<Var> = hu
            .iter()
            .map(|h| {
                let p0 = tape.mul(g[0], h[0]);
                let p1 = tape.mul(g[1], h[1]);
                let p2 = tape.mul(g[2], h[2]);
                let s = tape.add(p0, p1);
                tape.add(s, p2)
            })
            .collect();
        let no_pairs: Arc<[(usize, usize)]> = Arc::from(Vec::new());
        std::array::from_fn(|a| {
            // n_a = -g_a / |g|, ∂_d n_a = -H_a·u_d / |g| + g_a (g·H u_d) / |g|³
            let gi = tape.mul(g[a], inv);
            let value = tape.neg(gi);
            let first = (0..n_tan)
                .map(|d| {
                    let t1 = tape.mul(hu[d][a], inv);
                    let ga3 = tape.mul(g[a], inv3);
                    let t2 = tape.mul(ga3, ghu[d]);
                    tape.sub(t2, t1)
                })
                .collect();
            let na = Jet { value, first, second: Vec::new(), pairs: no_pairs.clone() };
            let na = jet::reshape(tape, &na, r, n);
            let wn = jet::mul(tape, &w_t, &na);
            jet::row_sums(tape, &wn)
        })
    });

    BatchRender { rgb, depth, opacity, normal }
}

/// Renders a view of a learned field in chunks of rays, without gradients.
pub fn render_view_batched<F: TapeField + ?Sized>(field: &F, cam: &Camera, samples: usize, with_normals: bool, chunk: usize) -> RenderedView {
    let t = uniform_depths(cam.near, cam.far, samples);
    let pixels: Vec<usize> = (0..cam.pixel_count()).collect();
    let outs: Vec<RenderOutput> = pixels
        .par_chunks(chunk.max(1))
        .flat_map_iter(|px| {
            let rays: Vec<Ray> =
                px.iter().map(|&p| cam.pixel_to_ray((p % cam.width) as f64, (p / cam.width) as f64).expect("pixel in bounds")).collect();
            let batch = RayBatch { t: vec![t.clone(); rays.len()], rays };
            let mut tape = Tape::new();
            let vars = field.layout().register(&mut tape, field.params());
            let req = JetRequest { tangents: Vec::new(), normals: with_normals };
            let out = render_batch(&mut tape, field, &vars, &batch, &req, true);
            let rgb = out.rgb.map(|v| tape.value(v).clone());
            (0..batch.len())
                .map(|i| RenderOutput {
                    color: rgb.as_ref().map_or([0.0; 3], |c| [c.get(i, 0), c.get(i, 1), c.get(i, 2)]),
                    depth: tape.value(out.depth.value).get(i, 0),
                    normal: out.normal.as_ref().map_or([0.0; 3], |nn| std::array::from_fn(|k| tape.value(nn[k].value).get(i, 0))),
                    opacity: tape.value(out.opacity).get(i, 0),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    collect_view(cam, outs)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Homogeneous(f64);
    impl VolumeField for Homogeneous {
        fn radiance<S: Real>(&self, _x: &V3<S>, _v: &V3<S>) -> (V3<S>, S) {
            ([S::lift(0.2), S::lift(0.5), S::lift(0.9)], S::lift(self.0))
        }
        fn density<S: Real>(&self, _x: &V3<S>) -> S {
            S::lift(self.0)
        }
    }

    fn set(sigma: &[f64], t: &[f64], delta: &[f64]) -> SampleSet<f64> {
        SampleSet {
            t: t.to_vec(),
            delta: delta.to_vec(),
            sigma: sigma.to_vec(),
            color: vec![[1.0, 0.5, 0.25]; t.len()],
            normal: vec![[0.0, 0.0, 1.0]; t.len()],
        }
    }

    #[test]
    fn uniform_samples_are_bin_midpoints() {
        let ray = Ray::new([0.0; 3], [0.0, 0.0, 1.0], 0.0, 1.0);
        assert_eq!(sample_ray(&ray, 2, SamplingMode::Uniform, 0).unwrap(), vec![0.25, 0.75]);
        assert!(sample_ray(&ray, 1, SamplingMode::Uniform, 0).is_err());
    }

    #[test]
    fn stratified_samples_stay_in_their_bins() {
        let ray = Ray::new([0.0; 3], [0.0, 0.0, 1.0], 2.0, 6.0);
        for seed in 0..50 {
            let t = sample_ray(&ray, 8, SamplingMode::Stratified, seed).unwrap();
            for (i, &ti) in t.iter().enumerate() {
                assert!(ti >= 2.0 + 0.5 * i as f64 && ti < 2.0 + 0.5 * (i + 1) as f64);
            }
        }
    }

    #[test]
    fn empty_medium_renders_black_at_depth_zero() {
        let out = composite(&set(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0], &[1.0; 4])).unwrap();
        assert_eq!(out.color, [0.0; 3]);
        assert_eq!(out.depth, 0.0);
        assert_eq!(out.opacity, 0.0);
    }

    #[test]
    fn half_opaque_single_sample() {
        let out = composite(&set(&[std::f64::consts::LN_2], &[3.0], &[1.0])).unwrap();
        assert!((out.opacity - 0.5).abs() < 1e-15);
        assert!((out.depth - 1.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_density_names_the_sample() {
        let err = composite(&set(&[0.1, f64::NAN, 0.3], &[1.0, 2.0, 3.0], &[1.0; 3])).unwrap_err();
        assert_eq!(err, RenderError::NonFinite { index: 1, what: "density" });
    }

    #[test]
    fn homogeneous_medium_is_translation_invariant() {
        let ray = Ray::new([0.3, -0.2, 0.0], [0.0, 0.6, 0.8], 1.0, 5.0);
        let t = sample_ray(&ray, 16, SamplingMode::Uniform, 0).unwrap();
        let d = render_depth_derivative(&Homogeneous(0.7), &ray, &t, &[1.0, 2.0, -0.5]).unwrap();
        assert_eq!(d, 0.0);
    }
}
