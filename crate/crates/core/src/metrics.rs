//! Image and depth-map quality metrics.

use crate::linalg::V3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("size mismatch: {a} vs {b} pixels")]
    SizeMismatch { a: usize, b: usize },
    #[error("image {width}x{height} is smaller than the {min}x{min} window")]
    TooSmall { width: usize, height: usize, min: usize },
}

fn same_len(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::SizeMismatch { a, b });
    }
    Ok(())
}

pub fn mse(a: &[V3<f64>], b: &[V3<f64>]) -> Result<f64, MetricError> {
    same_len(a.len(), b.len())?;
    let s: f64 = a.iter().zip(b).flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).powi(2))).sum();
    Ok(s / (3 * a.len()).max(1) as f64)
}

/// `10 log10(1 / MSE)` for values in `[0, 1]`; `+∞` when the images are
/// identical.
pub fn psnr(a: &[V3<f64>], b: &[V3<f64>]) -> Result<f64, MetricError> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

pub fn luma(c: &V3<f64>) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two single-channel images with dynamic range 1.
pub fn ssim_gray(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64, MetricError> {
    same_len(a.len(), b.len())?;
    same_len(a.len(), width * height)?;
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(MetricError::TooSmall { width, height, min: SSIM_WINDOW });
    }
    let k = gaussian_window();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
    let mu_a = filter_valid(a, width, height, &k);
    let mu_b = filter_valid(b, width, height, &k);
    let aa = filter_valid(&prod(a, a), width, height, &k);
    let bb = filter_valid(&prod(b, b), width, height, &k);
    let ab = filter_valid(&prod(a, b), width, height, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// SSIM on the luma of two RGB images.
pub fn ssim(a: &[V3<f64>], b: &[V3<f64>], width: usize, height: usize) -> Result<f64, MetricError> {
    let la: Vec<f64> = a.iter().map(luma).collect();
    let lb: Vec<f64> = b.iter().map(luma).collect();
    ssim_gray(&la, &lb, width, height)
}

/// Mean squared forward difference along x plus the same along y.
pub fn depth_roughness(depth: &[f64], width: usize, height: usize) -> f64 {
    let at = |x: usize, y: usize| depth[y * width + x];
    let mut sx = 0.0;
    for y in 0..height {
        for x in 0..width.saturating_sub(1) {
            sx += (at(x + 1, y) - at(x, y)).powi(2);
        }
    }
    let mut sy = 0.0;
    for y in 0..height.saturating_sub(1) {
        for x in 0..width {
            sy += (at(x, y + 1) - at(x, y)).powi(2);
        }
    }
    let nx = (width.saturating_sub(1) * height).max(1) as f64;
    let ny = (width * height.saturating_sub(1)).max(1) as f64;
    sx / nx + sy / ny
}

/// [`depth_roughness`] restricted to neighbour pairs with both pixels in
/// `mask`; `None` when there is no such pair along either axis.
pub fn masked_depth_roughness(depth: &[f64], mask: &[bool], width: usize, height: usize) -> Option<f64> {
    let mut acc = [(0.0, 0usize); 2];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !mask[i] {
                continue;
            }
            if x + 1 < width && mask[i + 1] {
                acc[0].0 += (depth[i + 1] - depth[i]).powi(2);
                acc[0].1 += 1;
            }
            if y + 1 < height && mask[i + width] {
                acc[1].0 += (depth[i + width] - depth[i]).powi(2);
                acc[1].1 += 1;
            }
        }
    }
    (acc[0].1 > 0 || acc[1].1 > 0).then(|| acc.iter().filter(|a| a.1 > 0).map(|a| a.0 / a.1 as f64).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthMetrics {
    /// `None` when no pixel is both opaque and has valid ground truth.
    pub mae: Option<f64>,
    /// Roughness over the MAE mask.
    pub roughness: Option<f64>,
    /// Roughness over the whole predicted map, silhouettes included.
    pub roughness_full: f64,
    /// Pixels in the mask.
    pub valid: usize,
}

/// Opacity above 0.5 and ground truth closer than `gt_far`.
pub fn depth_mask(gt: &[f64], opacity: &[f64], gt_far: f64) -> Vec<bool> {
    gt.iter().zip(opacity).map(|(&g, &o)| o > 0.5 && g.is_finite() && g < gt_far * (1.0 - 1e-6)).collect()
}

/// MAE and roughness over [`depth_mask`], plus full-map roughness.
pub fn depth_metrics(pred: &[f64], gt: &[f64], opacity: &[f64], width: usize, height: usize, gt_far: f64) -> Result<DepthMetrics, MetricError> {
    same_len(pred.len(), gt.len())?;
    same_len(pred.len(), opacity.len())?;
    same_len(pred.len(), width * height)?;
    let mask = depth_mask(gt, opacity, gt_far);
    let valid = mask.iter().filter(|&&m| m).count();
    let sum: f64 = (0..pred.len()).filter(|&i| mask[i]).map(|i| (pred[i] - gt[i]).abs()).sum();
    Ok(DepthMetrics {
        mae: (valid > 0).then(|| sum / valid as f64),
        roughness: masked_depth_roughness(pred, &mask, width, height),
        roughness_full: depth_roughness(pred, width, height),
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = vec![[0.3, 0.4, 0.5]; 16];
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b: Vec<V3<f64>> = a.iter().map(|c| c.map(|v| v + 0.1)).collect();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &b[..3]).is_err());
    }

    #[test]
    fn ssim_examples() {
        let (w, h) = (16, 16);
        let checker: Vec<f64> = (0..w * h).map(|i| ((i % w + i / w) % 2) as f64).collect();
        let inverted: Vec<f64> = checker.iter().map(|v| 1.0 - v).collect();
        assert_eq!(ssim_gray(&checker, &checker, w, h).unwrap(), 1.0);
        assert!(ssim_gray(&checker, &inverted, w, h).unwrap() < 0.0);
        assert!(matches!(ssim_gray(&[0.0; 100], &[0.0; 100], 10, 10), Err(MetricError::TooSmall { .. })));
    }

    #[test]
    fn ramp_roughness() {
        let s = 0.3;
        let d: Vec<f64> = (0..25).map(|i| s * ((i % 5) + (i / 5)) as f64).collect();
        assert!((depth_roughness(&d, 5, 5) - 2.0 * s * s).abs() < 1e-12);
        assert_eq!(depth_roughness(&[4.0; 25], 5, 5), 0.0);
        assert!((masked_depth_roughness(&d, &[true; 25], 5, 5).unwrap() - 2.0 * s * s).abs() < 1e-12);
    }

    #[test]
    fn mask_drops_silhouette_pairs() {
        // a step edge between two flat regions
        let d: Vec<f64> = (0..16).map(|i| if i % 4 < 2 { 1.0 } else { 5.0 }).collect();
        let left: Vec<bool> = (0..16).map(|i| i % 4 < 2).collect();
        assert!(depth_roughness(&d, 4, 4) > 0.0);
        assert_eq!(masked_depth_roughness(&d, &left, 4, 4), Some(0.0));
        assert_eq!(masked_depth_roughness(&d, &[false; 16], 4, 4), None);
    }

    #[test]
    fn empty_mask_is_undefined() {
        let m = depth_metrics(&[1.0; 4], &[1.0; 4], &[0.0; 4], 2, 2, 10.0).unwrap();
        assert_eq!(m.mae, None);
        let m = depth_metrics(&[1.0; 4], &[1.0; 4], &[1.0; 4], 2, 2, 10.0).unwrap();
        assert_eq!(m.mae, Some(0.0));
    }
}
