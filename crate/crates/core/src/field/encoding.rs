use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::scalar::Real;

/// Sinusoidal lifting of positions and view directions.
///
/// Layout per encoded vector: the raw input (if `include_input`), then for
/// each frequency `2^k π` all sines followed by all cosines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionalEncoding {
    pub num_frequencies_position: usize,
    pub num_frequencies_direction: usize,
    pub include_input: bool,
}

impl Default for PositionalEncoding {
    fn default() -> Self {
        Self { num_frequencies_position: 8, num_frequencies_direction: 4, include_input: true }
    }
}

impl PositionalEncoding {
    pub fn position_dim(&self) -> usize {
        encoded_dim(3, self.num_frequencies_position, self.include_input)
    }

    pub fn direction_dim(&self) -> usize {
        encoded_dim(3, self.num_frequencies_direction, self.include_input)
    }
}

pub fn encoded_dim(input_dim: usize, freqs: usize, include_input: bool) -> usize {
    input_dim * (usize::from(include_input) + 2 * freqs)
}

fn omega(k: usize) -> f64 {
    (1u64 << k) as f64 * PI
}

pub fn encode<S: Real>(p: &[S], freqs: usize, include_input: bool) -> Vec<S> {
    let mut out = Vec::with_capacity(encoded_dim(p.len(), freqs, include_input));
    if include_input {
        out.extend_from_slice(p);
    }
    for k in 0..freqs {
        let w = S::lift(omega(k));
        out.extend(p.iter().map(|&x| (w * x).sin()));
        out.extend(p.iter().map(|&x| (w * x).cos()));
    }
    out
}

/// Encoded rows plus their derivatives when every input point `p_r` moves
/// along per-row directions: `dirs[d][r]` is the velocity of row `r` along
/// direction `d`. Returns `(value, first[d], second[pair])`, each
/// `rows x encoded_dim`.
pub fn encode_jet(
    points: &[[f64; 3]],
    dirs: &[Vec<[f64; 3]>],
    pairs: &[(usize, usize)],
    freqs: usize,
    include_input: bool,
) -> (Tensor, Vec<Tensor>, Vec<Tensor>) {
    let rows = points.len();
    let dim = encoded_dim(3, freqs, include_input);
    let mut value = Vec::with_capacity(rows * dim);
    let mut first: Vec<Vec<f64>> = vec![Vec::with_capacity(rows * dim); dirs.len()];
    let mut second: Vec<Vec<f64>> = vec![Vec::with_capacity(rows * dim); pairs.len()];
    for (r, p) in points.iter().enumerate() {
        if include_input {
            value.extend_from_slice(p);
            for (d, f) in first.iter_mut().enumerate() {
                f.extend_from_slice(&dirs[d][r]);
            }
            for s in second.iter_mut() {
                s.extend_from_slice(&[0.0; 3]);
            }
        }
        for k in 0..freqs {
            let w = omega(k);
            let sc: Vec<(f64, f64)> = p.iter().map(|&x| (w * x).sin_cos()).collect();
            // sines
            value.extend(sc.iter().map(|&(s, _)| s));
            for (d, f) in first.iter_mut().enumerate() {
                f.extend((0..3).map(|c| w * sc[c].1 * dirs[d][r][c]));
            }
            for (s, &(a, b)) in second.iter_mut().zip(pairs) {
                s.extend((0..3).map(|c| -w * w * sc[c].0 * dirs[a][r][c] * dirs[b][r][c]));
            }
            // cosines
            value.extend(sc.iter().map(|&(_, c)| c));
            for (d, f) in first.iter_mut().enumerate() {
                f.extend((0..3).map(|c| -w * sc[c].0 * dirs[d][r][c]));
            }
            for (s, &(a, b)) in second.iter_mut().zip(pairs) {
                s.extend((0..3).map(|c| -w * w * sc[c].1 * dirs[a][r][c] * dirs[b][r][c]));
            }
        }
    }
    (
        Tensor::new(rows, dim, value),
        first.into_iter().map(|f| Tensor::new(rows, dim, f)).collect(),
        second.into_iter().map(|s| Tensor::new(rows, dim, s)).collect(),
    )
}
