//! Compilation of few-qubit special unitaries into products of Pauli-string
//! exponentials, using geodesic-generated training data and two learned
//! decomposition stages, followed by exact gate synthesis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod circuit;
pub mod dataset;
pub mod error;
pub mod geodesic;
pub mod linalg;
pub mod models;
pub mod nn;
pub mod pipeline;

pub use error::{GeoqcError, Result};
pub use linalg::ComplexMatrix;
