//! Derivative engines.
//!
//! Spatial derivatives of field outputs use forward mode ([`Dual`],
//! [`Dual2`] and the helpers in [`forward`]); parameter derivatives use the
//! reverse-mode [`Tape`]. Training losses that contain spatial derivatives
//! record forward-mode [`Jet`]s on the tape and are then swept backward
//! (forward-over-reverse).

mod dual;
mod dual2;
pub mod forward;
pub mod jet;
pub mod tape;

pub use dual::Dual;
pub use dual2::Dual2;
pub use forward::{directional, gradient, hessian, jvp, value_and_gradient, value_gradient_hessian, DiffMap, ScalarMap};
pub use jet::Jet;
pub use tape::{backward, Gradients, ParamId, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("non-finite value produced by `{primitive}`")]
    NonFinite { primitive: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("output node was not recorded on this tape")]
    ForeignOutput,
    #[error("backward needs a 1x1 output, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("tape budget of {limit} elements exceeded")]
    TapeExhausted { limit: usize },
}
