//! Dense-tensor numerical core with tape-based reverse-mode autodiff.
//!
//! Everything is a row-major 2-D `f64` matrix; vectors are `1 x n`. A [`Tape`]
//! records the forward computation and replays it in reverse to accumulate
//! gradients. Tapes are rebuilt per training step (define-by-run) and are
//! strictly single-threaded.

mod adam;
pub mod check;
mod tape;

pub use adam::{adam_step, AdamParams, Param, ParamSet};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch: expected {expected:?}, got {got:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matmul inner dimensions differ: {a:?} x {b:?}")]
    InnerDim { a: (usize, usize), b: (usize, usize) },
    #[error("domain error in {op}: {what}")]
    Domain { op: &'static str, what: String },
    #[error("invalid parameter {name}: {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("degenerate input: vector norm below {0:e}")]
    DegenerateInput(f64),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("non-finite value detected in {0}")]
    NonFinite(String),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, NumError>;
