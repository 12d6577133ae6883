//! Dense reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes; calling
//! [`Graph::backward`] on a scalar walks the records once in reverse creation
//! order. Storage is dense and row-major with no strided views.

mod dense;
pub mod gradcheck;
mod graph;
mod ops;
mod scalar;

pub use dense::{numel, Tensor};
pub use gradcheck::finite_diff_check;
pub use graph::{Gradients, Graph, Var};
pub use ops::OpKind;
pub use scalar::{DType, Scalar};


use thiserror::Error;

/// Default epsilon of layer normalisation.
pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("buffer of {got} elements does not fill shape {shape:?} ({expected})")]
    DataLength { shape: Vec<usize>, expected: usize, got: usize },
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DTypeMismatch { expected: DType, found: DType },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("loss does not depend on any leaf that requires grad")]
    DetachedGraph,
}
