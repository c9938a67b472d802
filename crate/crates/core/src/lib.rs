//! Generalized covariance matrices of discrete Markov random fields.
//!
//! For a discrete graphical model, the inverse of the covariance of suitably
//! chosen indicator statistics has a zero pattern dictated by a
//! triangulation of the graph. This crate computes those matrices exactly
//! at enumerable scale, checks the block zero patterns, and implements the
//! graph-selection estimators built on them (graphical Lasso with
//! thresholding, nodewise linear regression for trees, general graphs and
//! correlation-decay graphs), including corrections for zero-filled missing
//! data.

pub mod error;
pub mod estimation;
pub mod graph;
pub mod harness;
pub mod mrf;
pub mod population;
pub mod sampling;

pub use error::{Error, Result};
