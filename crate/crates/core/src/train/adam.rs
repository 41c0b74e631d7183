//! Adam on flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Steps taken so far.
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdamError {
    #[error("shape mismatch: {params} params, {grads} grads, {state} moments")]
    Shape { params: usize, grads: usize, state: usize },
    #[error("non-finite gradient at index {index}; step rejected")]
    NonFinite { index: usize },
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update. On error nothing is modified.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig, lr: f64) -> Result<(), AdamError> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(AdamError::Shape { params: params.len(), grads: grads.len(), state: state.m.len() });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(AdamError::NonFinite { index });
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default(), 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        let mut s = AdamState { m: vec![0.5, 0.5], v: vec![1.0, 1.0], t: 3 };
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default(), 1e-3).unwrap();
        assert_eq!(s.m, vec![0.45, 0.45]);
        assert_eq!(s.v, vec![0.999, 0.999]);
    }

    #[test]
    fn first_step_scalar() {
        let cfg = AdamConfig::default();
        let (g, lr) = (0.3, 0.01);
        let mut p = vec![2.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[g], &mut s, &cfg, lr).unwrap();
        // m̂ = g, v̂ = g², update = lr g / (|g| + eps)
        let expected = 2.0 - lr * g / (g.abs() + cfg.eps);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_is_rejected_untouched() {
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut s, &AdamConfig::default(), 0.1).unwrap_err();
        assert_eq!(err, AdamError::NonFinite { index: 1 });
        assert_eq!((p, s.t), (vec![1.0, 1.0], 0));
    }
}
