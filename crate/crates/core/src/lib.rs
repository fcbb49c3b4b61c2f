//! Soft-graph cut clustering for single-cell expression matrices.
//!
//! The pipeline: [`ingest`] loads and preprocesses counts, [`softgraph`]
//! builds two dense similarity graphs and their normalized Laplacians,
//! [`zinb`] is the autoencoder with zero-inflated negative binomial output
//! heads, [`otcluster`] turns embeddings into balanced soft assignments via
//! Sinkhorn transport, and [`trainer`] optimizes everything jointly.
//! [`metrics`] scores the result and [`simdata`] generates synthetic data.

// Negated float comparisons are how the validators reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;

pub use diffcore::{DenseMatrix, DiffError, Graph, NodeId, Reduction};
pub mod ingest;
pub mod metrics;
pub mod otcluster;
pub mod simdata;
pub mod softgraph;
pub mod trainer;
pub mod zinb;
