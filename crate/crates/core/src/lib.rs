//! Inexact Riemannian proximal gradient (IRPG) method for `F = f + g` on the
//! Stiefel manifold.
//!
//! The crate is organized bottom-up:
//!
//! * [`manifold`]: tangent projection, polar retraction, differentiated
//!   retraction transports, normal and tangent bases.
//! * [`objective`]: smooth and nonsmooth oracles, the sparse PCA cost and the
//!   proximal model functions.
//! * [`prox`]: the tangent-space proximal subsolvers, a semismooth Newton
//!   method with the global certificate and a coordinate outer loop with the
//!   local residual certificate.
//! * [`driver`]: the outer proximal gradient loop with the G/U/L accuracy
//!   policies, Barzilai-Borwein safeguarding and backtracking.

pub mod driver;
pub mod error;
pub mod linalg;
pub mod manifold;
pub mod matrix_io;
pub mod objective;
pub mod prox;

pub use error::{IrpgError, Result};
pub use linalg::Mat;
