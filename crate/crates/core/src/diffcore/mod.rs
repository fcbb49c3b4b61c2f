//! Minimal reverse-mode differentiation over dense 2-D `f64` arrays.
//!
//! The kernel set is deliberately small: exactly what the ZINB likelihood,
//! the soft-graph cut loss, and the transport alignment loss need. There is
//! no implicit broadcasting; the only broadcast is [`Graph::scale_rows`].

mod check;
mod graph;
mod matrix;
pub mod special;

pub use check::finite_difference_check;
pub use graph::{Gradients, Graph, NodeId, Reduction};
pub use matrix::DenseMatrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("kernel `{kernel}` got incompatible shapes {left:?} and {right:?}")]
    Shape {
        kernel: &'static str,
        left: (usize, usize),
        right: Option<(usize, usize)>,
    },
    #[error("root must be 1x1, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("kernel `{kernel}` (node {node}) produced a non-finite value")]
    NonFinite { kernel: &'static str, node: usize },
    #[error("backward called before forward evaluated the root")]
    NotEvaluated,
    #[error("node {0} does not belong to this graph")]
    UnknownNode(usize),
    #[error("finite-difference epsilon must lie in (0, 1e-3], got {0}")]
    InvalidEpsilon(f64),
    #[error("input index {index} out of range for {count} inputs")]
    InvalidInput { index: usize, count: usize },
    #[error("loss became non-finite when perturbing entry ({row}, {col})")]
    NonFiniteLoss { row: usize, col: usize },
}
