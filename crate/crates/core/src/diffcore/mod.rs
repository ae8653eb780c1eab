//! Dense-tensor reverse-mode automatic differentiation.
//!
//! Values are recorded on an append-only [`Tape`]; [`Tape::backward`] walks it
//! in reverse insertion order, which is a reverse topological order because an
//! op can only reference earlier nodes. Graph sparsity is expressed with
//! [`Tape::segment_reduce`] and [`Tape::gather_rows`] over edge lists.

mod gradcheck;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{check_gradients, check_param_gradients, numeric_gradient, GradCheckReport};
pub use params::{glorot, orthogonal, ParamId, ParamStore, Session};
pub use tape::{empty_segments, Grads, Pointwise, Reduce, Tape, Var};
pub use tensor::Tensor;

/// Layer-norm epsilon used throughout.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("index error in {op}: index {index} out of range {bound}")]
    Index { op: &'static str, index: usize, bound: usize },
    #[error("numeric error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
}
