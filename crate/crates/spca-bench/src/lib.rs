//! Sparse PCA benchmark for the inexact Riemannian proximal gradient method.
//!
//! Generates standardized Gaussian data, starts every variant from the
//! leading right singular vectors, runs the variants in pairs sharing a seed
//! and aggregates the results into CSV and JSON reports.

pub mod bench;
pub mod config;
pub mod data;
pub mod error;

pub use error::{BenchError, Result};
