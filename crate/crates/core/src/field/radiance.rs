use serde::{Deserialize, Serialize};

use super::encoding::{encode, PositionalEncoding};
use super::mlp::{affine, trunk, trunk_jet, LayerVars, Layout};
use super::{check_unit, FieldError, VolumeField};
use crate::autodiff::jet::{self, Jet};
use crate::autodiff::{Tape, Var};
use crate::linalg::V3;
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadianceConfig {
    /// Number of softplus trunk layers.
    pub depth: usize,
    pub width: usize,
    /// Trunk layer that also receives the encoded position.
    pub skip_layer: Option<usize>,
    /// Hidden width of the view-conditioned color branch.
    pub color_width: usize,
    pub encoding: PositionalEncoding,
}

impl Default for RadianceConfig {
    fn default() -> Self {
        Self { depth: 6, width: 128, skip_layer: Some(3), color_width: 64, encoding: PositionalEncoding::default() }
    }
}

impl RadianceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.depth == 0 || self.width == 0 || self.color_width == 0 {
            return Err("depth, width and color_width must be positive".into());
        }
        if let Some(s) = self.skip_layer {
            if s == 0 || s >= self.depth {
                return Err(format!("skip_layer must lie in 1..{}, got {s}", self.depth));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let enc = self.encoding.position_dim();
        let mut l = Layout::default();
        for k in 0..self.depth {
            let inputs = match k {
                0 => enc,
                _ if self.skip_layer == Some(k) => self.width + enc,
                _ => self.width,
            };
            l.push(format!("trunk{k}"), inputs, self.width);
        }
        l.push("density", self.width, 1);
        l.push("feature", self.width, self.width);
        l.push("color_hidden", self.width + self.encoding.direction_dim(), self.color_width);
        l.push("color_out", self.color_width, 3);
        l
    }
}

/// `(x, v) -> (c, σ)` with softplus activations throughout, a softplus
/// density head and a sigmoid color head.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceFieldModel {
    pub config: RadianceConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Output of [`RadianceFieldModel::forward_tape`].
pub struct RadianceTape {
    /// `rows x 1` density with its spatial jet.
    pub sigma: Jet,
    /// `rows x 3` colors, present when view directions were supplied.
    pub rgb: Option<Var>,
}

impl RadianceFieldModel {
    pub fn new(config: RadianceConfig, seed: u64) -> Self {
        let layout = config.layout();
        let params = layout.init_uniform(&mut rng::stream(seed, "init", 0));
        Self { config, layout, params }
    }

    pub fn from_params(config: RadianceConfig, params: Vec<f64>) -> Result<Self, String> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.param_count() {
            return Err(format!("expected {} parameters, got {}", layout.param_count(), params.len()));
        }
        Ok(Self { config, layout, params })
    }

    fn density_layer(&self) -> usize {
        self.config.depth
    }

    fn hidden<S: Real>(&self, x: &V3<S>) -> Vec<S> {
        let enc = self.config.encoding;
        let input = encode(x, enc.num_frequencies_position, enc.include_input);
        trunk(&self.layout, &self.params, self.config.depth, self.config.skip_layer, &input)
    }

    fn sigma_from_hidden<S: Real>(&self, h: &[S]) -> S {
        self.layout.layers[self.density_layer()].apply(&self.params, h)[0].softplus()
    }

    fn color_from_hidden<S: Real>(&self, h: &[S], v: &V3<S>) -> V3<S> {
        let d = self.density_layer();
        let enc = self.config.encoding;
        let mut feat = self.layout.layers[d + 1].apply(&self.params, h);
        feat.extend(encode(v, enc.num_frequencies_direction, enc.include_input));
        let hid: Vec<S> = self.layout.layers[d + 2].apply(&self.params, &feat).into_iter().map(S::softplus).collect();
        let out = self.layout.layers[d + 3].apply(&self.params, &hid);
        [out[0].sigmoid(), out[1].sigmoid(), out[2].sigmoid()]
    }

    /// Checked evaluation on plain floats.
    pub fn eval_radiance(&self, x: &[f64; 3], v: &[f64; 3]) -> Result<([f64; 3], f64), FieldError> {
        check_unit(v)?;
        let (c, s) = self.radiance(x, v);
        Ok((c, s))
    }

    /// Batched forward pass on a tape. `pos` holds encoded positions (one
    /// row per sample) together with their spatial jet; `dir_enc` holds the
    /// matching encoded view directions.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &LayerVars, pos: &Jet, dir_enc: Option<Var>) -> RadianceTape {
        let h = trunk_jet(tape, vars, self.config.depth, self.config.skip_layer, pos);
        let d = self.density_layer();
        let z = jet::linear(tape, &h, vars.weights[d], Some(vars.biases[d]));
        let sigma = jet::softplus(tape, &z);
        let rgb = dir_enc.map(|de| {
            let feat = affine(tape, vars, d + 1, h.value);
            let cat = tape.concat_cols(&[feat, de]);
            let hid = affine(tape, vars, d + 2, cat);
            let hid = tape.softplus(hid);
            let out = affine(tape, vars, d + 3, hid);
            tape.sigmoid(out)
        });
        RadianceTape { sigma, rgb }
    }
}

impl VolumeField for RadianceFieldModel {
    fn radiance<S: Real>(&self, x: &V3<S>, v: &V3<S>) -> (V3<S>, S) {
        let h = self.hidden(x);
        (self.color_from_hidden(&h, v), self.sigma_from_hidden(&h))
    }

    fn density<S: Real>(&self, x: &V3<S>) -> S {
        self.sigma_from_hidden(&self.hidden(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{directional, DiffMap, ScalarMap};
    use crate::field::DensityMap;

    fn small() -> RadianceFieldModel {
        let cfg = RadianceConfig {
            depth: 3,
            width: 16,
            skip_layer: Some(2),
            color_width: 8,
            encoding: PositionalEncoding { num_frequencies_position: 3, num_frequencies_direction: 2, include_input: true },
        };
        RadianceFieldModel::new(cfg, 11)
    }

    #[test]
    fn output_ranges_hold_for_fresh_model() {
        let m = small();
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let x = [t.sin() * 3.0, t.cos() * 2.0, t * 0.1 - 2.0];
            let v = crate::linalg::normalize(&[t.cos(), 1.0, t.sin()]);
            let (c, s) = m.eval_radiance(&x, &v).unwrap();
            assert!(s >= 0.0 && s.is_finite());
            assert!(c.iter().all(|&ci| (0.0..=1.0).contains(&ci)));
        }
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        let m = small();
        assert!(matches!(m.eval_radiance(&[0.0; 3], &[1.0, 1.0, 0.0]), Err(FieldError::NonUnitDirection { .. })));
    }

    struct SigmaOfXv<'a>(&'a RadianceFieldModel);
    impl DiffMap for SigmaOfXv<'_> {
        fn call<S: Real>(&self, z: &[S]) -> Vec<S> {
            let (_, s) = self.0.radiance(&[z[0], z[1], z[2]], &[z[3], z[4], z[5]]);
            vec![s]
        }
    }

    #[test]
    fn density_ignores_view_direction() {
        let m = small();
        let z = [0.2, -0.3, 0.5, 0.0, 0.6, 0.8];
        let u = [0.0, 0.0, 0.0, 0.3, -1.0, 0.2];
        let d = crate::autodiff::jvp(&SigmaOfXv(&m), &z, &u).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn density_jvp_matches_central_difference() {
        let m = small();
        let x = [0.4, 0.1, -0.7];
        let u = [0.3, -0.5, 0.8];
        let (_, ad) = directional(&DensityMap(&m), &x, &u).unwrap();
        let h = 1e-5;
        let f = |s: f64| DensityMap(&m).call(&[x[0] + s * u[0], x[1] + s * u[1], x[2] + s * u[2]]);
        let fd = (f(h) - f(-h)) / (2.0 * h);
        assert!((ad - fd).abs() <= 1e-6 * ad.abs().max(1e-3), "{ad} vs {fd}");
    }

    #[test]
    fn tape_forward_matches_generic_eval() {
        use crate::autodiff::Tensor;
        use crate::field::encoding::{encode, encode_jet};
        let m = small();
        let pts = [[0.1, 0.2, 0.3], [-0.5, 0.4, 1.0]];
        let dirs = [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8]];
        let enc = m.config.encoding;
        let mut tape = Tape::new();
        let vars = m.layout.register(&mut tape, &m.params);
        let (v, f, s) = encode_jet(&pts, &[], &[], enc.num_frequencies_position, enc.include_input);
        let pos = Jet::constant(&mut tape, v, f, s, std::sync::Arc::from(Vec::new()));
        let de: Vec<f64> = dirs.iter().flat_map(|d| encode(d, enc.num_frequencies_direction, true)).collect();
        let de = tape.constant(Tensor::new(2, enc.direction_dim(), de));
        let out = m.forward_tape(&mut tape, &vars, &pos, Some(de));
        for r in 0..2 {
            let (c, s) = m.radiance(&pts[r], &dirs[r]);
            assert!((tape.value(out.sigma.value).get(r, 0) - s).abs() < 1e-13);
            for k in 0..3 {
                assert!((tape.value(out.rgb.unwrap()).get(r, k) - c[k]).abs() < 1e-13);
            }
        }
    }
}
