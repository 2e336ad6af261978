//! Finite-truncation laboratory for linear operators with many unimodular
//! eigenvectors: random eigenvector series, block constructions of
//! frequently hypercyclic vectors, return-time sets, Cantor eigenvector
//! fields and correlation diagnostics.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cantor;
pub mod config;
pub mod construction;
pub mod density;
pub mod diophantine;
pub mod eigenfields;
pub mod ergodicity;
pub mod error;
pub mod experiment;
pub mod linspace;
pub mod operators;
pub mod stats;
pub mod steinhaus;

pub use error::{Error, Result};
pub use linspace::{DualFunctional, StateVector, C64};
pub use operators::{OperatorKind, OperatorSpec};
