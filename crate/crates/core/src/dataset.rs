//! Dataset directories.
//!
//! ```text
//! meta.json        format version, seed, cameras, splits, scene
//! rgb/NNN.png      8-bit RGB per view
//! depth/NNN.pfm    ray-parameter depth per view (optional)
//! normal/NNN.pfm   unit normals per view (optional)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::imageio::{self, FloatImage, ImageError};
use crate::linalg::V3;
use crate::scene::AnalyticScene;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("meta.json: {0}")]
    Meta(String),
    #[error("unsupported dataset format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("inconsistent dataset: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub cameras: Vec<Camera>,
    /// Row-major RGB in `[0, 1]`, one per camera.
    pub images: Vec<Vec<V3<f64>>>,
    pub depths: Option<Vec<Vec<f64>>>,
    pub normals: Option<Vec<Vec<V3<f64>>>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub scene: Option<AnalyticScene>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub format_version: u32,
    pub seed: u64,
    pub cameras: Vec<Camera>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub has_depth: bool,
    pub has_normal: bool,
    pub scene: Option<AnalyticScene>,
}

fn view_path(dir: &Path, kind: &str, v: usize, ext: &str) -> PathBuf {
    dir.join(kind).join(format!("{v:03}.{ext}"))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

impl SceneDataset {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let n = self.cameras.len();
        let bad = |m: String| Err(DatasetError::Invalid(m));
        if self.train.is_empty() {
            return bad("no training views".into());
        }
        if self.images.len() != n {
            return bad(format!("{} images for {n} cameras", self.images.len()));
        }
        for (k, (img, cam)) in self.images.iter().zip(&self.cameras).enumerate() {
            if img.len() != cam.pixel_count() {
                return bad(format!("view {k}: {} pixels, camera has {}", img.len(), cam.pixel_count()));
            }
        }
        if self.train.iter().chain(&self.test).any(|&v| v >= n) {
            return bad("split index out of range".into());
        }
        if self.train.iter().any(|v| self.test.contains(v)) {
            return bad("train and test splits overlap".into());
        }
        Ok(())
    }

    pub fn meta(&self) -> Meta {
        Meta {
            format_version: FORMAT_VERSION,
            seed: self.seed,
            cameras: self.cameras.clone(),
            train: self.train.clone(),
            test: self.test.clone(),
            has_depth: self.depths.is_some(),
            has_normal: self.normals.is_some(),
            scene: self.scene.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        self.validate()?;
        for sub in ["rgb", "depth", "normal"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(io(&p))?;
        }
        let meta = serde_json::to_string_pretty(&self.meta()).expect("meta serializes");
        let mp = dir.join("meta.json");
        std::fs::write(&mp, meta + "\n").map_err(io(&mp))?;
        for (v, cam) in self.cameras.iter().enumerate() {
            let (w, h) = (cam.width, cam.height);
            imageio::write_png(&view_path(dir, "rgb", v, "png"), w, h, &self.images[v])?;
            if let Some(d) = &self.depths {
                imageio::write_pfm(&view_path(dir, "depth", v, "pfm"), &FloatImage::from_scalar(w, h, &d[v]))?;
            }
            if let Some(nm) = &self.normals {
                imageio::write_pfm(&view_path(dir, "normal", v, "pfm"), &FloatImage::from_vectors(w, h, &nm[v]))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let mp = dir.join("meta.json");
        let text = std::fs::read_to_string(&mp).map_err(io(&mp))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| DatasetError::Meta(e.to_string()))?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(DatasetError::Version { found, expected: FORMAT_VERSION });
        }
        let meta: Meta = serde_json::from_value(value).map_err(|e| DatasetError::Meta(e.to_string()))?;
        let check = |v: usize, what: &str, w: usize, h: usize, cam: &Camera| {
            if (w, h) != (cam.width, cam.height) {
                return Err(DatasetError::Invalid(format!("{what} {v}: {w}x{h}, camera is {}x{}", cam.width, cam.height)));
            }
            Ok(())
        };
        let mut images = Vec::new();
        let mut depths = meta.has_depth.then(Vec::new);
        let mut normals = meta.has_normal.then(Vec::new);
        for (v, cam) in meta.cameras.iter().enumerate() {
            let (w, h, rgb) = imageio::read_png(&view_path(dir, "rgb", v, "png"))?;
            check(v, "image", w, h, cam)?;
            images.push(rgb);
            if let Some(d) = depths.as_mut() {
                let img = imageio::read_pfm(&view_path(dir, "depth", v, "pfm"))?;
                check(v, "depth", img.width, img.height, cam)?;
                d.push(img.to_scalar());
            }
            if let Some(nm) = normals.as_mut() {
                let img = imageio::read_pfm(&view_path(dir, "normal", v, "pfm"))?;
                check(v, "normal", img.width, img.height, cam)?;
                nm.push(img.to_vectors());
            }
        }
        let ds = Self { cameras: meta.cameras, images, depths, normals, train: meta.train, test: meta.test, scene: meta.scene, seed: meta.seed };
        ds.validate()?;
        Ok(ds)
    }
}
