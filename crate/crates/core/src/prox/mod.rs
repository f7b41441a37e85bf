//! Inexact solvers for the Riemannian proximal mapping
//!
//! ```text
//! min_{eta in T_x M}  <grad f(x), eta> + L/2 ||eta||^2 + g(R_x(eta))
//! ```
//!
//! Two certificates are available:
//!
//! * [`Certificate::Global`]: a semismooth Newton method on the normal-space
//!   multiplier equation `Psi(Lambda) = 0` of the linearized problem (with
//!   `x + eta` in place of `R_x(eta)`), stopped as soon as
//!   `||Psi|| <= min(phi(||eta||), 0.5)` and the model does not increase.
//! * [`Certificate::Local`]: a fixed-point loop in tangent coordinates
//!   `c -> c + r(c)`, where `r(c)` approximately minimizes the model with the
//!   retraction linearized at `R_x(Q_x c)`; stopped once `||r(c)||` is below a
//!   user-supplied accuracy function of `||c||`.

use std::io::Write;

use crate::error::Result;
use crate::manifold::{NormalCoords, TangentCoords, TangentVector};

mod local;
mod ssn;

pub use local::{residual_tilde, solve_prox_local, CoordinateSubproblem, LocalOptions, ResidualReport};
pub use ssn::{psi, psi_jacobian_apply, solve_ssn_global, v_of_lambda, SsnOptions, TangentProx};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Certificate {
    /// `||Psi(Lambda)|| <= min(phi(||eta||), 0.5)` and `l_x(0) >= l_x(eta)`.
    Global,
    /// `||r~_x(c)|| <= psi(||c||)` and `l_x(0) >= l_x(Q_x c)`.
    Local,
}

impl Certificate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Certificate::Global => "global",
            Certificate::Local => "local",
        }
    }
}

/// One semismooth Newton iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SsnTraceRow {
    pub iteration: usize,
    pub psi_norm: f64,
    pub mu: f64,
    pub step: f64,
}

/// Stream SSN diagnostics as CSV with columns `iteration,psi_norm,mu,step`.
pub fn write_ssn_trace<W: Write>(writer: W, rows: &[SsnTraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "psi_norm", "mu", "step"])?;
    for r in rows {
        w.write_record([r.iteration.to_string(), r.psi_norm.to_string(), r.mu.to_string(), r.step.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Approximate proximal direction with the data needed to re-check its certificate.
#[derive(Clone, Debug)]
pub struct ProxSolution {
    pub eta_hat: TangentVector,
    /// Final multiplier. For the local path this is the multiplier of the last
    /// linearized subproblem, which lives at `R_x(Q_x c)`.
    pub lambda_hat: NormalCoords,
    pub psi_norm: f64,
    pub model_at_zero: f64,
    pub model_at_eta: f64,
    pub certificate: Certificate,
    /// Newton iterations summed over all inner solves.
    pub inner_iters: usize,
    /// Coordinate fixed-point iterations (local path only).
    pub outer_iters: usize,
    /// Tangent coordinates of `eta_hat` (local path only).
    pub coords: Option<TangentCoords>,
    /// `||r~~(c)||` at the accepted coordinates (local path only).
    pub residual_norm: Option<f64>,
    /// Accuracy target `psi(||c||)` the residual was compared against.
    pub psi_bound: Option<f64>,
    pub trace: Vec<SsnTraceRow>,
}

impl ProxSolution {
    pub fn eta_norm(&self) -> f64 {
        self.eta_hat.norm()
    }
}
