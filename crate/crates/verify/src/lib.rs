//! Independent auditors for runs and subproblem solutions of the inexact
//! Riemannian proximal gradient method.
//!
//! Every check is recomputed from the manifold and objective primitives of
//! `irpg-core`; the proximal subsolvers are never called. Each audit returns
//! an [`AuditReport`] with one record per checked inequality.

use std::fmt;
use std::io::Write;

use irpg_core::driver::RunTrace;
use irpg_core::manifold::{StiefelPoint, TangentCoords, TangentVector};
use irpg_core::objective::CompositeProblem;
use irpg_core::prox::{Certificate, ProxSolution};
use irpg_core::Result;

pub mod oracle;

use oracle::{coordinate_minimizer, linearized_residual, model_value, LinearizedProx};

/// Direction of the checked inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// `measured <= bound`.
    AtMost,
    /// `measured >= bound`.
    AtLeast,
}

#[derive(Clone, Debug)]
pub struct AuditRecord {
    pub check: String,
    pub instance: String,
    pub measured: f64,
    pub bound: f64,
    pub sense: Sense,
    /// Signed slack; nonnegative exactly when the record passes.
    pub margin: f64,
    pub passed: bool,
}

impl AuditRecord {
    pub fn new(check: impl Into<String>, instance: impl Into<String>, measured: f64, bound: f64, sense: Sense) -> Self {
        let margin = match sense {
            Sense::AtMost => bound - measured,
            Sense::AtLeast => measured - bound,
        };
        Self {
            check: check.into(),
            instance: instance.into(),
            measured,
            bound,
            sense,
            margin,
            passed: margin >= 0.0,
        }
    }

    /// A record that fails unconditionally, e.g. when an oracle breaks down.
    pub fn failure(check: impl Into<String>, instance: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            instance: instance.into(),
            measured: f64::NAN,
            bound: f64::NAN,
            sense: Sense::AtMost,
            margin: f64::NAN,
            passed: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AuditReport {
    pub records: Vec<AuditRecord>,
    /// Items the rule did not apply to.
    pub skipped: usize,
}

impl AuditReport {
    pub fn push(&mut self, record: AuditRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: AuditReport) {
        self.records.extend(other.records);
        self.skipped += other.skipped;
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditRecord> {
        self.records.iter().filter(|r| !r.passed)
    }

    pub fn failure_count(&self) -> usize {
        self.failures().count()
    }

    pub fn min_margin(&self) -> f64 {
        self.records.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["check", "instance", "measured", "bound", "sense", "margin", "passed"])?;
        for r in &self.records {
            w.write_record([
                r.check.clone(),
                r.instance.clone(),
                r.measured.to_string(),
                r.bound.to_string(),
                match r.sense {
                    Sense::AtMost => "<=".to_string(),
                    Sense::AtLeast => ">=".to_string(),
                },
                r.margin.to_string(),
                r.passed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} records, {} failed, {} skipped, min margin {:.3e}",
            self.records.len(),
            self.failure_count(),
            self.skipped,
            self.min_margin()
        )
    }
}

/// Sufficient decrease `F(x_k) - F(x_{k+1}) >= (L_k - L_hat)/2 ||eta_k||^2`
/// on unit steps taken with `L_k > L_hat`.
pub fn audit_descent(trace: &RunTrace, l_hat: f64) -> AuditReport {
    let mut report = AuditReport::default();
    for (k, row) in trace.rows.iter().enumerate() {
        if row.alpha != 1.0 || row.l_tilde <= l_hat {
            report.skipped += 1;
            continue;
        }
        let beta = 0.5 * (row.l_tilde - l_hat);
        let decrease = row.value - trace.value_after(k);
        report.push(AuditRecord::new(
            "descent",
            format!("{} k={}", trace.variant, row.k),
            decrease,
            beta * row.eta_norm * row.eta_norm,
            Sense::AtLeast,
        ));
    }
    report
}

/// Iteration complexity: the first `k` with `||eta_k|| <= eps` is at most
/// `(F(x_0) - F_best) / (beta eps^2)`, `beta = (L - L_hat)/2` with `L` the
/// smallest proximal parameter used before `k`.
pub fn audit_complexity(trace: &RunTrace, l_hat: f64, eps: f64) -> AuditReport {
    let mut report = AuditReport::default();
    let instance = format!("{} eps={eps:.3e}", trace.variant);
    let norms = trace.eta_norms();
    let Some(first) = norms.iter().position(|&e| e <= eps) else {
        report.push(AuditRecord::failure("complexity", format!("{instance} threshold never reached")));
        return report;
    };
    if first == 0 {
        report.push(AuditRecord::new("complexity", instance, 0.0, 0.0, Sense::AtMost));
        return report;
    }
    let l_min = trace.rows[..first.min(trace.rows.len())]
        .iter()
        .map(|r| r.l_tilde)
        .fold(f64::INFINITY, f64::min);
    let beta = 0.5 * (l_min - l_hat);
    if !(beta > 0.0) {
        report.push(AuditRecord::failure("complexity", format!("{instance} L <= L_hat")));
        return report;
    }
    let f_best = trace.best_value();
    let bound = (trace.initial_value - f_best) / (beta * eps * eps);
    report.push(AuditRecord::new("complexity", instance, first as f64, bound, Sense::AtMost));
    report
}

/// Error bound `||c - c*|| <= 2 ||r_x(c)||` of the coordinate problem, with
/// `c*` and `r_x(c)` from separate high-accuracy solves. A `1e-10` absolute
/// allowance covers the accuracy of the two reference solves. A second
/// record per sample reports `||r_x(c)|| / ||r~_x(c)||`.
pub fn audit_error_bound(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    l_tilde: f64,
    samples: &[TangentCoords],
) -> AuditReport {
    const SOLVE_TOL: f64 = 1e-12;
    const SLACK: f64 = 1e-10;
    let mut report = AuditReport::default();
    let zero = TangentCoords::zeros(x.dim());
    let c_star = match coordinate_minimizer(problem, x, l_tilde, &zero, SOLVE_TOL, 2000) {
        Ok(c) => c,
        Err(e) => {
            report.push(AuditRecord::failure("error-bound", format!("minimizer oracle: {e}")));
            return report;
        }
    };
    let grad = problem.rgrad(x);
    for (i, c) in samples.iter().enumerate() {
        let instance = format!("sample {i} |c|={:.3e}", c.norm());
        let r = match coordinate_minimizer(problem, x, l_tilde, c, SOLVE_TOL, 2000) {
            Ok(end) => TangentCoords(&end.0 - &c.0),
            Err(e) => {
                report.push(AuditRecord::failure("error-bound", format!("{instance} residual oracle: {e}")));
                continue;
            }
        };
        let dist = (&c.0 - &c_star.0).norm();
        report.push(AuditRecord::new("error-bound", instance.clone(), dist, 2.0 * r.norm() + SLACK, Sense::AtMost));
        if let Ok(rt) = linearized_residual(problem, x, &grad, l_tilde, c) {
            if rt.norm() > SLACK {
                report.push(AuditRecord::new(
                    "residual-ratio",
                    instance,
                    r.norm() / rt.norm(),
                    f64::INFINITY,
                    Sense::AtMost,
                ));
            }
        }
    }
    report
}

/// Polar retraction constants: `||R(t eta) - x|| / (t ||eta||) <= 1.01`,
/// the second-order ratio `||R(t eta) - x - t eta|| / (t ||eta||)^2` within a
/// factor 2 across the grid, and the first-order ratio within `t ||eta||` of
/// one wherever `t ||eta|| <= 1e-2`.
pub fn audit_retraction_constants(x: &StiefelPoint, directions: &[TangentVector], t_grid: &[f64]) -> AuditReport {
    let mut report = AuditReport::default();
    for (i, eta) in directions.iter().enumerate() {
        let norm = eta.norm();
        if norm == 0.0 || t_grid.is_empty() {
            report.skipped += 1;
            continue;
        }
        let mut second = Vec::new();
        for &t in t_grid {
            let instance = format!("direction {i} t={t:.1e}");
            let y = match x.retract(&(eta * t)) {
                Ok(y) => y,
                Err(_) => {
                    report.push(AuditRecord::failure("retraction", instance));
                    continue;
                }
            };
            let diff = y.matrix() - x.matrix();
            let ratio1 = diff.norm() / (t * norm);
            report.push(AuditRecord::new("kappa1", instance.clone(), ratio1, 1.01, Sense::AtMost));
            if t * norm <= 1e-2 {
                report.push(AuditRecord::new("first-order", instance, (ratio1 - 1.0).abs(), t * norm, Sense::AtMost));
            }
            second.push((&diff - eta * t).norm() / (t * t * norm * norm));
        }
        if second.len() > 1 {
            let hi = second.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = second.iter().cloned().fold(f64::INFINITY, f64::min);
            report.push(AuditRecord::new("kappa2-spread", format!("direction {i}"), hi / lo, 2.0, Sense::AtMost));
        }
    }
    report
}

/// Re-verifies the certificate carried by `solution` at `x`.
///
/// `bound` is the tolerance function of the certificate: `phi` for
/// [`Certificate::Global`] (checked as `||Psi(Lambda)|| <= min(phi(||eta||), 0.5)`),
/// `psi` for [`Certificate::Local`] (checked as `||r~_x(c)|| <= psi(||c||)`).
/// Both kinds also check `l_x(0) >= l_x(eta)` and that `eta` is the direction
/// the certificate describes.
pub fn audit_certificates(
    solution: &ProxSolution,
    problem: &CompositeProblem,
    x: &StiefelPoint,
    l_tilde: f64,
    bound: &dyn Fn(f64) -> f64,
) -> AuditReport {
    let mut report = AuditReport::default();
    let eta = &solution.eta_hat;
    let eta_norm = eta.norm();
    let scale = 1.0 + eta_norm;
    let tag = solution.certificate.as_str();

    report.push(AuditRecord::new(
        "tangency",
        tag,
        x.tangency_residual(eta),
        1e-10 * scale,
        Sense::AtMost,
    ));

    match (model_value(problem, x, &TangentVector::zeros(x.n(), x.p()), l_tilde), model_value(problem, x, eta, l_tilde)) {
        (Ok(at_zero), Ok(at_eta)) => {
            // rounding allowance on the model values
            let tol = 1e-12 * (1.0 + at_zero.abs());
            report.push(AuditRecord::new("model-decrease", tag, at_eta, at_zero + tol, Sense::AtMost));
        }
        _ => report.push(AuditRecord::failure("model-decrease", tag)),
    }

    match solution.certificate {
        Certificate::Global => {
            let sub = LinearizedProx { problem, x, grad: problem.rgrad(x), l_tilde };
            let (psi, v) = match (sub.psi(&solution.lambda_hat), sub.v(&solution.lambda_hat)) {
                (Ok(psi), Ok(v)) => (psi, v),
                _ => {
                    report.push(AuditRecord::failure("newton-residual", tag));
                    return report;
                }
            };
            let tol = bound(eta_norm).min(0.5);
            report.push(AuditRecord::new("newton-residual", tag, psi.norm(), tol, Sense::AtMost));
            let consistency = match x.proj_tangent(&v) {
                Ok(pv) => (&pv - eta).norm(),
                Err(_) => f64::INFINITY,
            };
            report.push(AuditRecord::new("direction-consistency", tag, consistency, 1e-10 * scale, Sense::AtMost));
        }
        Certificate::Local => {
            let Some(c) = &solution.coords else {
                report.push(AuditRecord::failure("residual", format!("{tag} without coordinates")));
                return report;
            };
            let consistency = match x.tangent_apply(c) {
                Ok(qc) => (&qc - eta).norm(),
                Err(_) => f64::INFINITY,
            };
            report.push(AuditRecord::new("direction-consistency", tag, consistency, 1e-10 * scale, Sense::AtMost));
            match linearized_residual(problem, x, &problem.rgrad(x), l_tilde, c) {
                Ok(r) => report.push(AuditRecord::new("residual", tag, r.norm(), bound(c.norm()), Sense::AtMost)),
                Err(e) => report.push(AuditRecord::failure("residual", format!("{tag} oracle: {e}"))),
            }
        }
    }
    report
}
