//! Pinhole and orthographic cameras, rays, and ray-local frames.
//!
//! Camera space follows the x-right, y-down, z-forward convention. Pixel
//! `(x, y)` addresses the square whose center is at continuous image
//! coordinate `(x + 0.5, y + 0.5)`; rows grow downward.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, M3, V3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("pixel ({x}, {y}) outside a {width}x{height} image")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },
    #[error("cannot build a frame around a zero vector")]
    ZeroDirection,
    #[error("invalid camera: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Perspective,
    Orthographic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub projection: Projection,
    /// Pixels per unit of image-plane distance. For orthographic cameras
    /// one pixel spans `1 / focal` scene units.
    pub focal: f64,
    /// Principal point in continuous image coordinates.
    pub principal: [f64; 2],
    /// World-from-camera rotation; columns are the camera axes in world
    /// space (right, down, forward).
    pub rotation: M3<f64>,
    /// Camera center in world space.
    pub translation: V3<f64>,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<S = f64> {
    pub origin: V3<S>,
    pub direction: V3<S>,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray<f64> {
    pub fn new(origin: V3<f64>, direction: V3<f64>, t_near: f64, t_far: f64) -> Self {
        Self { origin, direction, t_near, t_far }
    }

    pub fn lift<S: Real>(&self) -> Ray<S> {
        Ray { origin: linalg::lift3(self.origin), direction: linalg::lift3(self.direction), t_near: self.t_near, t_far: self.t_far }
    }

    pub fn at(&self, t: f64) -> V3<f64> {
        linalg::axpy(&self.origin, t, &self.direction)
    }
}

/// Unit vectors `i`, `j` completing a ray direction `v` to an orthonormal
/// basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayFrame {
    pub i: V3<f64>,
    pub j: V3<f64>,
}

/// Derivatives of a pixel's ray with respect to the pixel coordinates.
/// Row 0 is `∂/∂x`, row 1 is `∂/∂y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelJacobian {
    pub origin: [V3<f64>; 2],
    pub direction: [V3<f64>; 2],
}

impl Camera {
    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        projection: Projection,
        eye: V3<f64>,
        target: V3<f64>,
        up: V3<f64>,
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self, CameraError> {
        let fwd = linalg::sub(&target, &eye);
        if linalg::norm(&fwd) == 0.0 {
            return Err(CameraError::Invalid("eye and target coincide".into()));
        }
        let fwd = linalg::normalize(&fwd);
        let mut right = linalg::cross(&fwd, &up);
        if linalg::norm(&right) < 1e-9 {
            right = linalg::cross(&fwd, &ray_frame(&fwd)?.i);
        }
        let right = linalg::normalize(&right);
        let down = linalg::cross(&fwd, &right);
        let rotation = [[right[0], down[0], fwd[0]], [right[1], down[1], fwd[1]], [right[2], down[2], fwd[2]]];
        let cam = Self {
            projection,
            focal,
            principal: [width as f64 / 2.0, height as f64 / 2.0],
            rotation,
            translation: eye,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.focal > 0.0) {
            return Err(CameraError::Invalid(format!("focal must be positive, got {}", self.focal)));
        }
        if !(self.near < self.far) || self.near < 0.0 {
            return Err(CameraError::Invalid(format!("need 0 <= near < far, got [{}, {}]", self.near, self.far)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Invalid("image size must be positive".into()));
        }
        let rtr = linalg::mat_mul(&linalg::transpose(&self.rotation), &self.rotation);
        for (r, row) in rtr.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let e = if r == c { 1.0 } else { 0.0 };
                if (v - e).abs() > 1e-10 {
                    return Err(CameraError::Invalid("rotation is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    pub fn axis(&self, k: usize) -> V3<f64> {
        [self.rotation[0][k], self.rotation[1][k], self.rotation[2][k]]
    }

    pub fn right(&self) -> V3<f64> {
        self.axis(0)
    }

    pub fn down(&self) -> V3<f64> {
        self.axis(1)
    }

    pub fn forward(&self) -> V3<f64> {
        self.axis(2)
    }

    fn check_bounds(&self, x: f64, y: f64) -> Result<(), CameraError> {
        let inside = |p: f64, n: usize| p >= -0.5 && p <= n as f64 - 0.5;
        if !(inside(x, self.width) && inside(y, self.height)) {
            return Err(CameraError::OutOfBounds { x, y, width: self.width, height: self.height });
        }
        Ok(())
    }

    /// Camera-space offsets of a pixel from the principal point, in image
    /// plane units.
    fn plane_coords(&self, x: f64, y: f64) -> (f64, f64) {
        ((x + 0.5 - self.principal[0]) / self.focal, (y + 0.5 - self.principal[1]) / self.focal)
    }

    fn to_world(&self, c: &V3<f64>) -> V3<f64> {
        linalg::mat_vec(&self.rotation, c)
    }

    pub fn pixel_to_ray(&self, x: f64, y: f64) -> Result<Ray, CameraError> {
        self.check_bounds(x, y)?;
        let (u, w) = self.plane_coords(x, y);
        Ok(match self.projection {
            Projection::Perspective => {
                let d = linalg::normalize(&[u, w, 1.0]);
                Ray::new(self.translation, self.to_world(&d), self.near, self.far)
            }
            Projection::Orthographic => {
                let o = linalg::add(&self.translation, &self.to_world(&[u, w, 0.0]));
                Ray::new(o, self.forward(), self.near, self.far)
            }
        })
    }

    /// Pixel coordinates whose ray passes through `p` (inverse of
    /// [`Camera::pixel_to_ray`]); `None` behind a perspective camera.
    pub fn project(&self, p: &V3<f64>) -> Option<[f64; 2]> {
        let rel = linalg::sub(p, &self.translation);
        let c = linalg::mat_vec(&linalg::transpose(&self.rotation), &rel);
        let (u, w) = match self.projection {
            Projection::Perspective => {
                if c[2] <= 0.0 {
                    return None;
                }
                (c[0] / c[2], c[1] / c[2])
            }
            Projection::Orthographic => (c[0], c[1]),
        };
        Some([u * self.focal + self.principal[0] - 0.5, w * self.focal + self.principal[1] - 0.5])
    }

    /// `J_C`: derivatives of the ray origin and unit direction with respect
    /// to the pixel coordinates.
    pub fn pixel_jacobian(&self, x: f64, y: f64) -> Result<PixelJacobian, CameraError> {
        self.check_bounds(x, y)?;
        let k = 1.0 / self.focal;
        Ok(match self.projection {
            Projection::Perspective => {
                let (u, w) = self.plane_coords(x, y);
                let d = [u, w, 1.0];
                let len = linalg::norm(&d);
                let n = linalg::scale(&d, 1.0 / len);
                // d(d/|d|) = (I - n nᵀ) dd / |d|
                let row = |e: V3<f64>| {
                    let de = linalg::scale(&e, k);
                    let proj = linalg::axpy(&de, -linalg::dot(&n, &de), &n);
                    self.to_world(&linalg::scale(&proj, 1.0 / len))
                };
                PixelJacobian { origin: [[0.0; 3]; 2], direction: [row([1.0, 0.0, 0.0]), row([0.0, 1.0, 0.0])] }
            }
            Projection::Orthographic => PixelJacobian {
                origin: [linalg::scale(&self.right(), k), linalg::scale(&self.down(), k)],
                direction: [[0.0; 3]; 2],
            },
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Deterministic frame around `v`: start from the canonical axis least
/// aligned with `v` (lowest index on ties), orthogonalize, then `j = v × i`.
pub fn ray_frame(v: &V3<f64>) -> Result<RayFrame, CameraError> {
    let n = linalg::norm(v);
    if !(n > 0.0) {
        return Err(CameraError::ZeroDirection);
    }
    let v = linalg::scale(v, 1.0 / n);
    let mut k = 0;
    for c in 1..3 {
        if v[c].abs() < v[k].abs() {
            k = c;
        }
    }
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let i = linalg::normalize(&linalg::axpy(&e, -v[k], &v));
    let j = linalg::cross(&v, &i);
    Ok(RayFrame { i, j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn persp() -> Camera {
        Camera::look_at(Projection::Perspective, [0.3, -4.0, 1.5], [0.0, 0.0, 0.2], [0.0, 0.0, 1.0], 60.0, 64, 48, 1.0, 8.0)
            .unwrap()
    }

    fn ortho(focal: f64) -> Camera {
        Camera::look_at(Projection::Orthographic, [0.0, 0.0, -5.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0], focal, 32, 32, 0.5, 10.0)
            .unwrap()
    }

    #[test]
    fn principal_pixel_looks_forward() {
        let c = persp();
        let r = c.pixel_to_ray(31.5, 23.5).unwrap();
        for k in 0..3 {
            assert!((r.direction[k] - c.forward()[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn orthographic_rays_share_direction() {
        let c = ortho(1.0);
        let a = c.pixel_to_ray(3.0, 4.0).unwrap();
        let b = c.pixel_to_ray(10.0, 2.0).unwrap();
        assert_eq!(a.direction, b.direction);
        let d = linalg::sub(&b.origin, &a.origin);
        assert!(linalg::dot(&d, &a.direction).abs() < 1e-12);
        assert!(linalg::norm(&d) > 1.0);
    }

    #[test]
    fn perspective_rays_share_origin_bitwise() {
        let c = persp();
        assert_eq!(c.pixel_to_ray(0.0, 0.0).unwrap().origin, c.pixel_to_ray(50.0, 7.0).unwrap().origin);
    }

    #[test]
    fn projection_round_trip() {
        let mut r = crate::rng::stream(1, "camera", 0);
        for cam in [persp(), ortho(3.0)] {
            for _ in 0..200 {
                let x = r.random_range(-0.5..63.5f64).min(cam.width as f64 - 0.5);
                let y = r.random_range(-0.5..47.5f64).min(cam.height as f64 - 0.5);
                let ray = cam.pixel_to_ray(x, y).unwrap();
                let p = cam.project(&ray.at(r.random_range(1.0..8.0))).unwrap();
                assert!((p[0] - x).abs() < 1e-6 && (p[1] - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn out_of_bounds_pixel_is_rejected() {
        assert!(matches!(persp().pixel_to_ray(64.0, 0.0), Err(CameraError::OutOfBounds { .. })));
        assert!(persp().pixel_to_ray(-0.5, 47.5).is_ok());
    }

    #[test]
    fn frame_for_z_axis() {
        let f = ray_frame(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.i, [1.0, 0.0, 0.0]);
        assert_eq!(f.j, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut r = crate::rng::stream(2, "frame", 0);
        for _ in 0..1000 {
            let v = linalg::normalize(&[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
            let f = ray_frame(&v).unwrap();
            let basis = [f.i, f.j, v];
            for a in 0..3 {
                for b in 0..3 {
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((linalg::dot(&basis[a], &basis[b]) - e).abs() < 1e-10);
                }
            }
        }
        assert!(matches!(ray_frame(&[0.0; 3]), Err(CameraError::ZeroDirection)));
    }

    #[test]
    fn orthographic_jacobian_rows_are_frame_vectors() {
        let c = ortho(1.0);
        let j = c.pixel_jacobian(5.0, 5.0).unwrap();
        assert_eq!(j.origin, [c.right(), c.down()]);
        assert_eq!(j.direction, [[0.0; 3]; 2]);
    }

    #[test]
    fn perspective_jacobian_matches_central_differences() {
        let c = persp();
        let (x, y) = (12.3, 30.7);
        let j = c.pixel_jacobian(x, y).unwrap();
        let h = 1e-4;
        for (row, (dx, dy)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
            let p = c.pixel_to_ray(x + h * dx, y + h * dy).unwrap().direction;
            let m = c.pixel_to_ray(x - h * dx, y - h * dy).unwrap().direction;
            let fd = linalg::scale(&linalg::sub(&p, &m), 1.0 / (2.0 * h));
            let err = linalg::norm(&linalg::sub(&fd, &j.direction[row]));
            assert!(err <= 1e-6 * linalg::norm(&fd), "row {row}: {err}");
        }
    }

    #[test]
    fn doubling_focal_halves_jacobian_at_principal_point() {
        let a = persp();
        let mut b = a.clone();
        b.focal *= 2.0;
        let ja = a.pixel_jacobian(31.5, 23.5).unwrap();
        let jb = b.pixel_jacobian(31.5, 23.5).unwrap();
        for r in 0..2 {
            let ratio = linalg::norm(&jb.direction[r]) / linalg::norm(&ja.direction[r]);
            assert!((ratio - 0.5).abs() < 1e-12);
        }
    }
}
