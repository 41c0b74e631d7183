//! Run configuration files for `diffreg train`.

use std::path::PathBuf;

use diffreg::curvature::CurvatureConfig;
use diffreg::field::{ModelSpec, SdfConfig};
use diffreg::train::TrainConfig;
use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    #[serde(flatten)]
    pub train: TrainConfig,
}

/// Parses a run config, rejecting unknown keys and naming the offending
/// key path on error.
pub fn parse_run_config(text: &str) -> Result<RunConfig, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(mut map) = value else {
        return Err("config must be a JSON object".into());
    };
    let mut take = |key: &str| -> Result<PathBuf, String> {
        match map.remove(key) {
            Some(Value::String(s)) => Ok(PathBuf::from(s)),
            Some(_) => Err(format!("{key}: expected a path string")),
            None => Err(format!("missing required key `{key}`")),
        }
    };
    let dataset = take("dataset")?;
    let output_dir = take("output_dir")?;
    let train = deserialize_at_path(Value::Object(map))?;
    train.validate().map_err(|e| e.to_string())?;
    Ok(RunConfig { dataset, output_dir, train })
}

fn deserialize_at_path(v: Value) -> Result<TrainConfig, String> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        }
    })
}

pub fn to_pretty_json(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes") + "\n"
}

fn flatten_keys(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_keys(&p, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn keys_of(prefix: &str, v: Value, note: &str, out: &mut Vec<(String, String)>) {
    let mut keys = Vec::new();
    flatten_keys(prefix, &v, &mut keys);
    out.extend(keys.into_iter().map(|(k, v)| (k, format!("{v}{note}"))));
}

/// Every config key with its default, one per line.
pub fn config_key_help() -> String {
    let mut keys = vec![
        ("dataset".to_string(), "(required) dataset directory".to_string()),
        ("output_dir".to_string(), "(required) directory for config.json, metrics.csv and checkpoints".to_string()),
    ];
    let mut base = serde_json::to_value(TrainConfig::default()).expect("defaults serialize");
    let obj = base.as_object_mut().expect("object");
    obj.remove("curvature");
    let radiance = obj.remove("model").expect("model key");
    keys_of("", base, "", &mut keys);
    keys_of("model", radiance, "  (radiance)", &mut keys);
    let sdf = serde_json::to_value(ModelSpec::Sdf(SdfConfig::default())).expect("defaults serialize");
    keys_of("model", sdf, "  (sdf)", &mut keys);
    let curv = serde_json::to_value(CurvatureConfig::default()).expect("defaults serialize");
    keys_of("curvature", curv, "  (optional block, sdf only; absent by default)", &mut keys);
    let mut out = String::from("Config keys (JSON; dotted paths are nested objects; unknown keys are rejected):\n");
    for (k, v) in keys {
        out.push_str(&format!("  {k:<48} {v}\n"));
    }
    out
}
