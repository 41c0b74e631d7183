//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `DRCKPT\0\0` |
//! | 4 | format version (`u32`) |
//! | 4 | header length `n` (`u32`) |
//! | n | UTF-8 JSON [`Header`] |
//! | 8·P | parameters as `f64`, in [`Layout`] order |
//! | 16·P | optional Adam first and second moments, same order |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Layout;
use super::{RadianceConfig, RadianceFieldModel, SdfConfig, SdfFieldModel};

pub const MAGIC: &[u8; 8] = b"DRCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error("truncated checkpoint: expected {expected} bytes of data, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Either kind of learned field.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldModel {
    Radiance(RadianceFieldModel),
    Sdf(SdfFieldModel),
}

impl FieldModel {
    pub fn params(&self) -> &[f64] {
        match self {
            Self::Radiance(m) => &m.params,
            Self::Sdf(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut Vec<f64> {
        match self {
            Self::Radiance(m) => &mut m.params,
            Self::Sdf(m) => &mut m.params,
        }
    }

    pub fn layout(&self) -> &Layout {
        match self {
            Self::Radiance(m) => &m.layout,
            Self::Sdf(m) => &m.layout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum ModelSpec {
    Radiance(RadianceConfig),
    Sdf(SdfConfig),
}

/// Adam state saved alongside the parameters so training can resume
/// exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerBlock {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub model: ModelSpec,
    pub seed: u64,
    /// Optimizer steps already taken.
    pub step: u64,
    pub param_count: usize,
    pub layers: Layout,
    pub has_optimizer: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: FieldModel,
    pub seed: u64,
    pub step: u64,
    pub optimizer: Option<OptimizerBlock>,
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn take_f64s(bytes: &[u8], n: usize) -> Vec<f64> {
    bytes[..8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

impl Checkpoint {
    pub fn header(&self) -> Header {
        let spec = match &self.model {
            FieldModel::Radiance(m) => ModelSpec::Radiance(m.config),
            FieldModel::Sdf(m) => ModelSpec::Sdf(m.config),
        };
        Header {
            model: spec,
            seed: self.seed,
            step: self.step,
            param_count: self.model.params().len(),
            layers: self.model.layout().clone(),
            has_optimizer: self.optimizer.is_some(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 24 * self.model.params().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        put_f64s(&mut out, self.model.params());
        if let Some(opt) = &self.optimizer {
            put_f64s(&mut out, &opt.m);
            put_f64s(&mut out, &opt.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::Version { found: version, expected: VERSION });
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(CheckpointError::Truncated { expected: hlen, found: body.len() });
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let data = &body[hlen..];
        let p = header.param_count;
        let blocks = if header.has_optimizer { 3 } else { 1 };
        if data.len() != 8 * p * blocks {
            return Err(CheckpointError::Truncated { expected: 8 * p * blocks, found: data.len() });
        }
        let params = take_f64s(data, p);
        let model = match header.model {
            ModelSpec::Radiance(cfg) => RadianceFieldModel::from_params(cfg, params).map(FieldModel::Radiance),
            ModelSpec::Sdf(cfg) => SdfFieldModel::from_params(cfg, params).map(FieldModel::Sdf),
        }
        .map_err(CheckpointError::Header)?;
        if *model.layout() != header.layers {
            return Err(CheckpointError::Header("layer table does not match the architecture".into()));
        }
        let optimizer = header
            .has_optimizer
            .then(|| OptimizerBlock { m: take_f64s(&data[8 * p..], p), v: take_f64s(&data[16 * p..], p) });
        Ok(Self { model, seed: header.seed, step: header.step, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
