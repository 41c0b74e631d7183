//! Continuous fields: learned radiance and signed-distance MLPs plus the
//! traits the renderer, regularizers and curvature operators consume.

pub mod checkpoint;
pub mod encoding;
pub mod mlp;
mod radiance;
mod sdf;

pub use checkpoint::{Checkpoint, CheckpointError, FieldModel, ModelSpec, OptimizerBlock};
pub use encoding::PositionalEncoding;
pub use radiance::{RadianceConfig, RadianceFieldModel, RadianceTape};
pub use sdf::{fibonacci_sphere, SdfConfig, SdfFieldModel, SdfTape};

use crate::autodiff::{Dual, ScalarMap};
use crate::linalg::{self, V3};
use crate::scalar::Real;

/// Gradient norms below this are treated as singular.
pub const EPS_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("view direction must be unit length, |v| = {norm}")]
    NonUnitDirection { norm: f64 },
    #[error("normal undefined: gradient norm {norm:e} below {EPS_NORM:e}")]
    DegenerateNormal { norm: f64 },
}

/// A field that can be volume rendered: `(x, v) -> (c, σ)`.
pub trait VolumeField {
    /// Color and density at `x` seen along `v`.
    fn radiance<S: Real>(&self, x: &V3<S>, v: &V3<S>) -> (V3<S>, S);

    /// Density alone; must agree with [`VolumeField::radiance`].
    fn density<S: Real>(&self, x: &V3<S>) -> S;
}

/// An implicit surface `F(x) = 0`.
pub trait SdfField {
    fn sdf<S: Real>(&self, x: &V3<S>) -> S;

    /// Surface albedo used when the field is rendered as a volume.
    fn albedo<S: Real>(&self, _x: &V3<S>) -> V3<S> {
        [S::lift(0.5); 3]
    }
}

impl<F: SdfField + ?Sized> SdfField for &F {
    fn sdf<S: Real>(&self, x: &V3<S>) -> S {
        (**self).sdf(x)
    }
    fn albedo<S: Real>(&self, x: &V3<S>) -> V3<S> {
        (**self).albedo(x)
    }
}

impl<F: VolumeField + ?Sized> VolumeField for &F {
    fn radiance<S: Real>(&self, x: &V3<S>, v: &V3<S>) -> (V3<S>, S) {
        (**self).radiance(x, v)
    }
    fn density<S: Real>(&self, x: &V3<S>) -> S {
        (**self).density(x)
    }
}

/// Adapts a [`SdfField`] to the generic derivative helpers.
pub struct SdfMap<'a, F: ?Sized>(pub &'a F);

impl<F: SdfField + ?Sized> ScalarMap for SdfMap<'_, F> {
    fn call<S: Real>(&self, x: &[S]) -> S {
        self.0.sdf(&[x[0], x[1], x[2]])
    }
}

/// Adapts the density of a [`VolumeField`] to the generic derivative helpers.
pub struct DensityMap<'a, F: ?Sized>(pub &'a F);

impl<F: VolumeField + ?Sized> ScalarMap for DensityMap<'_, F> {
    fn call<S: Real>(&self, x: &[S]) -> S {
        self.0.density(&[x[0], x[1], x[2]])
    }
}

fn axis<S: Real>(k: usize) -> V3<Dual<S>> {
    let mut out = [Dual::constant(S::zero()); 3];
    out[k] = Dual::constant(S::one());
    out
}

/// Spatial gradient of the density, stays generic in `S`.
pub fn density_gradient<S: Real, F: VolumeField + ?Sized>(field: &F, x: &V3<S>) -> (S, V3<S>) {
    let mut g = [S::zero(); 3];
    let mut value = S::zero();
    for (k, gk) in g.iter_mut().enumerate() {
        let e = axis::<S>(k);
        let xd = [Dual::new(x[0], e[0].value), Dual::new(x[1], e[1].value), Dual::new(x[2], e[2].value)];
        let d = field.density(&xd);
        value = d.value;
        *gk = d.tangent;
    }
    (value, g)
}

/// Spatial gradient of a signed-distance field.
pub fn sdf_gradient<S: Real, F: SdfField + ?Sized>(field: &F, x: &V3<S>) -> (S, V3<S>) {
    let mut g = [S::zero(); 3];
    let mut value = S::zero();
    for (k, gk) in g.iter_mut().enumerate() {
        let e = axis::<S>(k);
        let xd = [Dual::new(x[0], e[0].value), Dual::new(x[1], e[1].value), Dual::new(x[2], e[2].value)];
        let d = field.sdf(&xd);
        value = d.value;
        *gk = d.tangent;
    }
    (value, g)
}

fn unit_or_degenerate<S: Real>(g: V3<S>, sign: f64) -> Result<V3<S>, FieldError> {
    let n = linalg::norm(&g);
    if !(n.value() > EPS_NORM) {
        return Err(FieldError::DegenerateNormal { norm: n.value() });
    }
    Ok(linalg::scale(&g, S::lift(sign) / n))
}

/// Normal of a density field: `-∇σ / |∇σ|` (points out of dense regions).
pub fn density_normal<S: Real, F: VolumeField + ?Sized>(field: &F, x: &V3<S>) -> Result<V3<S>, FieldError> {
    unit_or_degenerate(density_gradient(field, x).1, -1.0)
}

/// Normal of a signed-distance field: `∇F / |∇F|`.
pub fn sdf_normal<S: Real, F: SdfField + ?Sized>(field: &F, x: &V3<S>) -> Result<V3<S>, FieldError> {
    unit_or_degenerate(sdf_gradient(field, x).1, 1.0)
}

pub(crate) fn check_unit(v: &[f64; 3]) -> Result<(), FieldError> {
    let norm = linalg::norm(v);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(FieldError::NonUnitDirection { norm });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Sphere(f64);
    impl SdfField for Sphere {
        fn sdf<S: Real>(&self, x: &V3<S>) -> S {
            linalg::norm(x) - S::lift(self.0)
        }
    }

    struct ExpSlab;
    impl VolumeField for ExpSlab {
        fn radiance<S: Real>(&self, x: &V3<S>, _v: &V3<S>) -> (V3<S>, S) {
            ([S::one(); 3], self.density(x))
        }
        fn density<S: Real>(&self, x: &V3<S>) -> S {
            (-x[0]).exp()
        }
    }

    struct Flat;
    impl VolumeField for Flat {
        fn radiance<S: Real>(&self, _x: &V3<S>, _v: &V3<S>) -> (V3<S>, S) {
            ([S::one(); 3], S::lift(2.0))
        }
        fn density<S: Real>(&self, _x: &V3<S>) -> S {
            S::lift(2.0)
        }
    }

    #[test]
    fn sphere_normal() {
        let n = sdf_normal(&Sphere(2.0), &[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(n, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn density_normal_points_toward_lower_density() {
        let n = density_normal(&ExpSlab, &[0.3, 1.0, -2.0]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-15 && n[1] == 0.0 && n[2] == 0.0);
    }

    #[test]
    fn flat_density_has_degenerate_normal() {
        assert!(matches!(density_normal(&Flat, &[0.0, 0.0, 0.0]), Err(FieldError::DegenerateNormal { .. })));
    }
}
