//! Random training rays.

use rand::Rng as _;

use crate::camera::Ray;
use crate::dataset::SceneDataset;
use crate::linalg::V3;
use crate::rng;

/// Where a training ray came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRef {
    pub view: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRays {
    pub rays: Vec<Ray>,
    pub targets: Vec<V3<f64>>,
    pub pixels: Vec<PixelRef>,
}

impl TrainRays {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// The ray and color of one dataset pixel.
pub fn pixel_ray(ds: &SceneDataset, p: PixelRef) -> (Ray, V3<f64>) {
    let cam = &ds.cameras[p.view];
    let ray = cam.pixel_to_ray(p.x as f64, p.y as f64).expect("pixel in bounds");
    (ray, ds.images[p.view][p.y * cam.width + p.x])
}

/// Pixel number `k` in the concatenation of all training views.
fn train_pixel(ds: &SceneDataset, mut k: usize) -> PixelRef {
    for &view in &ds.train {
        let cam = &ds.cameras[view];
        let n = cam.pixel_count();
        if k < n {
            return PixelRef { view, x: k % cam.width, y: k / cam.width };
        }
        k -= n;
    }
    unreachable!("pixel index out of range")
}

pub fn train_pixel_count(ds: &SceneDataset) -> usize {
    ds.train.iter().map(|&v| ds.cameras[v].pixel_count()).sum()
}

/// `batch_size` pixels drawn uniformly with replacement from all training
/// views; depends only on `(seed, step)`.
pub fn sample_ray_batch(ds: &SceneDataset, batch_size: usize, seed: u64, step: u64) -> TrainRays {
    let total = train_pixel_count(ds);
    let mut r = rng::stream(seed, "batch", step);
    let pixels: Vec<PixelRef> = (0..batch_size).map(|_| train_pixel(ds, r.random_range(0..total))).collect();
    let (rays, targets) = pixels.iter().map(|&p| pixel_ray(ds, p)).unzip();
    TrainRays { rays, targets, pixels }
}
