use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::jet::{self, Jet};
use crate::autodiff::{Gradients, ParamId, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::scalar::Real;

/// One fully connected layer inside a flat parameter vector: an
/// `inputs x outputs` row-major weight block at `offset`, followed by
/// `outputs` biases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Dense {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn bias_offset(&self) -> usize {
        self.offset + self.weight_len()
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.outputs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.weight_len()]
    }

    pub fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.bias_offset()..self.bias_offset() + self.outputs]
    }

    /// `x · W + b` on any scalar.
    pub fn apply<S: Real>(&self, params: &[f64], x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.inputs);
        let w = self.weights(params);
        let mut out: Vec<S> = self.bias(params).iter().map(|&b| S::lift(b)).collect();
        for (i, &xi) in x.iter().enumerate() {
            let row = &w[i * self.outputs..(i + 1) * self.outputs];
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += xi * S::lift(wij);
            }
        }
        out
    }
}

/// Ordered list of layers sharing one flat parameter vector. Parameters are
/// stored layer by layer in this order, weights before biases.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub layers: Vec<Dense>,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, inputs: usize, outputs: usize) -> usize {
        let offset = self.param_count();
        self.layers.push(Dense { name: name.into(), inputs, outputs, offset });
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.offset + l.len())
    }

    /// Uniform `±1/sqrt(fan_in)` weights and zero biases.
    pub fn init_uniform(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        for l in &self.layers {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            for w in &mut p[l.offset..l.offset + l.weight_len()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        p
    }

    /// Registers every layer as trainable tape leaves. Layer `k` uses
    /// parameter ids `2k` (weights) and `2k + 1` (bias).
    pub fn register(&self, tape: &mut Tape, params: &[f64]) -> LayerVars {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            weights.push(tape.param(ParamId(2 * k), Tensor::new(l.inputs, l.outputs, l.weights(params).to_vec())));
            biases.push(tape.param(ParamId(2 * k + 1), Tensor::new(1, l.outputs, l.bias(params).to_vec())));
        }
        LayerVars { weights, biases }
    }

    /// Gathers tape gradients back into the flat parameter order.
    pub fn flatten(&self, grads: &Gradients) -> Vec<f64> {
        let mut flat = vec![0.0; self.param_count()];
        for (k, l) in self.layers.iter().enumerate() {
            if let Some(g) = grads.get(ParamId(2 * k)) {
                flat[l.offset..l.offset + l.weight_len()].copy_from_slice(g.data());
            }
            if let Some(g) = grads.get(ParamId(2 * k + 1)) {
                flat[l.bias_offset()..l.bias_offset() + l.outputs].copy_from_slice(g.data());
            }
        }
        flat
    }
}

/// Softplus trunk over layers `0..depth` of `layout`. Layer `skip` (if any)
/// sees the hidden state concatenated with the network input.
pub fn trunk<S: Real>(layout: &Layout, params: &[f64], depth: usize, skip: Option<usize>, input: &[S]) -> Vec<S> {
    let mut h = input.to_vec();
    for k in 0..depth {
        if skip == Some(k) {
            h.extend_from_slice(input);
        }
        h = layout.layers[k].apply(params, &h).into_iter().map(S::softplus).collect();
    }
    h
}

/// Tape counterpart of [`trunk`] on a jet of row-stacked inputs.
pub fn trunk_jet(tape: &mut Tape, vars: &LayerVars, depth: usize, skip: Option<usize>, input: &Jet) -> Jet {
    let mut h = input.clone();
    for k in 0..depth {
        if skip == Some(k) {
            h = jet::concat_cols(tape, &[&h, input]);
        }
        let z = jet::linear(tape, &h, vars.weights[k], Some(vars.biases[k]));
        h = jet::softplus(tape, &z);
    }
    h
}

/// Plain affine layer on a tape value.
pub fn affine(tape: &mut Tape, vars: &LayerVars, layer: usize, x: Var) -> Var {
    let z = tape.matmul(x, vars.weights[layer]);
    tape.add(z, vars.biases[layer])
}

/// Tape handles of a [`Layout`]'s parameters.
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}
