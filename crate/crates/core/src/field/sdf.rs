use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoding::{encode, encoded_dim};
use super::mlp::{affine, trunk, trunk_jet, LayerVars, Layout};
use super::SdfField;
use crate::autodiff::jet::{self, Jet};
use crate::autodiff::{Tape, Var};
use crate::linalg::V3;
use crate::rng;
use crate::scalar::Real;

const INIT_GAIN: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdfConfig {
    pub depth: usize,
    pub width: usize,
    pub skip_layer: Option<usize>,
    /// Positional-encoding frequencies applied to `x` (0 keeps raw input).
    pub num_frequencies: usize,
    /// Radius of the sphere the network starts from.
    pub init_radius: f64,
    /// Density scale `α` of the SDF-to-density transform.
    pub density_alpha: f64,
    /// Laplace sharpness `β` of the SDF-to-density transform.
    pub density_beta: f64,
}

impl Default for SdfConfig {
    fn default() -> Self {
        Self { depth: 6, width: 128, skip_layer: Some(3), num_frequencies: 0, init_radius: 1.0, density_alpha: 10.0, density_beta: 0.1 }
    }
}

impl SdfConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.depth == 0 || self.width == 0 {
            return Err("depth and width must be positive".into());
        }
        if let Some(s) = self.skip_layer {
            if s == 0 || s >= self.depth {
                return Err(format!("skip_layer must lie in 1..{}, got {s}", self.depth));
            }
        }
        if !(self.init_radius > 0.0 && self.density_alpha > 0.0 && self.density_beta > 0.0) {
            return Err("init_radius, density_alpha and density_beta must be positive".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        encoded_dim(3, self.num_frequencies, true)
    }

    pub fn layout(&self) -> Layout {
        let enc = self.input_dim();
        let mut l = Layout::default();
        for k in 0..self.depth {
            let inputs = match k {
                0 => enc,
                _ if self.skip_layer == Some(k) => self.width + enc,
                _ => self.width,
            };
            l.push(format!("trunk{k}"), inputs, self.width);
        }
        l.push("sdf", self.width, 1);
        l.push("albedo", self.width, 3);
        l
    }
}

/// Signed-distance MLP `x -> F(x)` with a view-independent albedo head.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfFieldModel {
    pub config: SdfConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Output of [`SdfFieldModel::forward_tape`].
pub struct SdfTape {
    /// `rows x 1` signed distance with its spatial jet.
    pub sdf: Jet,
    /// `rows x 3` albedo, when requested.
    pub albedo: Option<Var>,
}

impl SdfFieldModel {
    /// Geometric initialization: a random softplus trunk followed by a
    /// head fitted so the fresh network approximates `‖x‖ - init_radius`.
    pub fn new(config: SdfConfig, seed: u64) -> Self {
        let layout = config.layout();
        let mut stream = rng::stream(seed, "init", 0);
        let mut params = layout.init_uniform(&mut stream);
        let w = config.width;
        for k in 0..config.depth {
            let l = &layout.layers[k];
            let normal = Normal::new(0.0, (2.0 / l.outputs as f64).sqrt()).unwrap();
            // raw coordinates are amplified so softplus stays near its
            // piecewise-linear limit; the head undoes the gain
            let gain = |i: usize| if k == 0 || i >= w { INIT_GAIN } else { 1.0 };
            for i in 0..l.inputs {
                // only raw coordinates feed the trunk at the start
                let is_encoded_feature = match k {
                    0 => i >= 3,
                    _ if config.skip_layer == Some(k) => i >= w + 3,
                    _ => false,
                };
                for o in 0..l.outputs {
                    params[l.offset + i * l.outputs + o] = if is_encoded_feature { 0.0 } else { gain(i) * normal.sample(&mut stream) };
                }
            }
            params[l.bias_offset()..l.bias_offset() + l.outputs].fill(0.0);
        }
        let head = &layout.layers[config.depth];
        let normal = Normal::new(std::f64::consts::PI.sqrt() / (w as f64).sqrt(), 1e-4).unwrap();
        for p in &mut params[head.offset..head.bias_offset()] {
            *p = normal.sample(&mut stream) / INIT_GAIN;
        }
        params[head.bias_offset()] = -config.init_radius;
        let mut model = Self { config, layout, params };
        model.fit_head(seed);
        model
    }

    /// Fits the linear head by ridge regression so that `F` matches
    /// `‖x‖ - r₀` on random points of the box `[-2r₀, 2r₀]³`.
    fn fit_head(&mut self, seed: u64) {
        let r0 = self.config.init_radius;
        let head = self.layout.layers[self.config.depth].clone();
        let w = head.inputs;
        let n = 8 * (w + 1);
        let mut stream = rng::stream(seed, "init-fit", 0);
        let mut a = DMatrix::<f64>::zeros(n, w + 1);
        let mut t = DVector::<f64>::zeros(n);
        for r in 0..n {
            let x: [f64; 3] = std::array::from_fn(|_| stream.random_range(-2.0 * r0..2.0 * r0));
            let h = self.hidden(&x);
            for (c, &v) in h.iter().enumerate() {
                a[(r, c)] = v;
            }
            a[(r, w)] = 1.0;
            t[r] = crate::linalg::norm(&x) - r0;
        }
        let mut normal = a.transpose() * &a;
        let ridge = 1e-8 * normal.trace() / (w + 1) as f64;
        for k in 0..=w {
            normal[(k, k)] += ridge;
        }
        let rhs = a.transpose() * t;
        let sol = normal.cholesky().expect("ridge system is positive definite").solve(&rhs);
        for k in 0..w {
            self.params[head.offset + k] = sol[k];
        }
        self.params[head.bias_offset()] = sol[w];
    }

    pub fn from_params(config: SdfConfig, params: Vec<f64>) -> Result<Self, String> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.param_count() {
            return Err(format!("expected {} parameters, got {}", layout.param_count(), params.len()));
        }
        Ok(Self { config, layout, params })
    }

    fn hidden<S: Real>(&self, x: &V3<S>) -> Vec<S> {
        let input = encode(x, self.config.num_frequencies, true);
        trunk(&self.layout, &self.params, self.config.depth, self.config.skip_layer, &input)
    }

    pub fn eval_sdf(&self, x: &[f64; 3]) -> f64 {
        self.sdf(x)
    }

    /// Batched forward pass on a tape; `pos` holds encoded positions.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &LayerVars, pos: &Jet, with_albedo: bool) -> SdfTape {
        let d = self.config.depth;
        let h = trunk_jet(tape, vars, d, self.config.skip_layer, pos);
        let sdf = jet::linear(tape, &h, vars.weights[d], Some(vars.biases[d]));
        let albedo = with_albedo.then(|| {
            let z = affine(tape, vars, d + 1, h.value);
            tape.sigmoid(z)
        });
        SdfTape { sdf, albedo }
    }
}

impl SdfField for SdfFieldModel {
    fn sdf<S: Real>(&self, x: &V3<S>) -> S {
        let h = self.hidden(x);
        self.layout.layers[self.config.depth].apply(&self.params, &h)[0]
    }

    fn albedo<S: Real>(&self, x: &V3<S>) -> V3<S> {
        let h = self.hidden(x);
        let z = self.layout.layers[self.config.depth + 1].apply(&self.params, &h);
        [z[0].sigmoid(), z[1].sigmoid(), z[2].sigmoid()]
    }
}

/// `n` nearly uniform unit vectors.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}
