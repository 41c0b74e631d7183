//! Differential-geometry regularizers for volume-rendered neural fields.
//!
//! The crate trains small radiance fields and signed-distance fields on
//! synthetic few-view scenes and regularizes them with losses built from
//! spatial derivatives of the field: depth-map gradients, normal-map
//! Jacobians, and mean/Gaussian curvature of the zero level set.
//!
//! Geometry and losses are written once against [`Real`] and evaluated on
//! `f64`, `f32`, or nested forward-mode duals. Training uses the batched
//! reverse-mode [`autodiff::Tape`].

pub mod autodiff;
pub mod camera;
pub mod curvature;
pub mod dataset;
pub mod field;
pub mod imageio;
pub mod linalg;
pub mod metrics;
pub mod regularization;
pub mod render;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod train;
pub mod verify;

pub use scalar::Real;

/// Forward-mode dual over `f64`.
pub type Dual64 = autodiff::Dual<f64>;
/// Second-order forward-mode dual over `f64`.
pub type Dual2f64 = autodiff::Dual2<f64>;
/// Dual over `f32`, mostly for cheap previews.
pub type Dual32 = autodiff::Dual<f32>;
/// A point or direction in scene space.
pub type Vec3 = [f64; 3];
