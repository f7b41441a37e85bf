//! Outer loop of the inexact Riemannian proximal gradient method.
//!
//! Each iteration computes an approximate proximal direction under one of
//! three accuracy policies, backtracks on `F` along the retraction, and sets
//! the next proximal parameter by a safeguarded Barzilai-Borwein rule. A
//! backtracking failure multiplies the proximal parameter by the escalation
//! factor and re-solves the subproblem at the same point.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{IrpgError, Result};
use crate::linalg::inner;
use crate::manifold::{NormalCoords, StiefelPoint, TangentVector};
use crate::objective::CompositeProblem;
use crate::prox::{solve_prox_local, solve_ssn_global, Certificate, LocalOptions, ProxSolution, SsnOptions};

/// How accurately the proximal subproblem is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Newton certificate on the multiplier equation.
    G,
    /// Residual certificate with `psi = eps_k^2`.
    U,
    /// Residual certificate with `psi = min(eps_k^2, rho ||c||^2)`.
    L,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::G, Variant::U, Variant::L];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::G => "G",
            Variant::U => "U",
            Variant::L => "L",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = IrpgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().trim_start_matches("IRPG-") {
            "G" => Ok(Variant::G),
            "U" => Ok(Variant::U),
            "L" => Ok(Variant::L),
            other => Err(IrpgError::InvalidParameter(format!("unknown variant {other:?}"))),
        }
    }
}

/// Admissible accuracy functions `q(eps_k, ||eta||)` bounding the distance
/// of the computed direction to the exact proximal direction.
#[derive(Clone, Copy, Debug)]
pub enum QChoice {
    /// `eps_k` with `eps_k -> 0`.
    Epsilon,
    /// `q~(||eta||)` for a continuous `q~` with `q~(0) = 0`.
    Implicit(fn(f64) -> f64),
    /// `eps_k^2` with summable `eps_k`.
    EpsilonSquared,
    /// `min(eps_k^2, delta_q ||eta||^2)`.
    MinQuadratic { delta_q: f64 },
}

pub fn q_bound(choice: QChoice, eps: f64, eta_norm: f64) -> f64 {
    match choice {
        QChoice::Epsilon => eps,
        QChoice::Implicit(q) => q(eta_norm),
        QChoice::EpsilonSquared => eps * eps,
        QChoice::MinQuadratic { delta_q } => (eps * eps).min(delta_q * eta_norm * eta_norm),
    }
}

/// `eps_k = scale / (1 + k)^exponent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { scale: 500.0, exponent: 1.01 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, k: usize) -> f64 {
        self.scale / (1.0 + k as f64).powf(self.exponent)
    }
}

/// `500 / (1 + k)^1.01`.
pub fn epsilon_schedule(k: usize) -> f64 {
    EpsilonSchedule::default().at(k)
}

#[derive(Clone, Debug)]
pub struct AccuracyPolicy {
    pub variant: Variant,
    pub schedule: EpsilonSchedule,
    pub rho: f64,
    /// Tolerance function of the Newton certificate, `phi(0) = 0`, nondecreasing.
    pub phi: fn(f64) -> f64,
    pub ssn: SsnOptions,
    pub local: LocalOptions,
}

impl AccuracyPolicy {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            schedule: EpsilonSchedule::default(),
            rho: 100.0,
            phi: f64::sqrt,
            ssn: SsnOptions::default(),
            local: LocalOptions::default(),
        }
    }

    /// The accuracy function this variant realizes.
    pub fn q_choice(&self) -> QChoice {
        match self.variant {
            Variant::G => QChoice::Implicit(self.phi),
            Variant::U => QChoice::EpsilonSquared,
            Variant::L => QChoice::MinQuadratic { delta_q: self.rho },
        }
    }

    /// Residual target `psi(eps_k, rho, t)` of the local certificate.
    pub fn psi_bound(&self, k: usize, t: f64) -> f64 {
        let eps = self.schedule.at(k);
        match self.variant {
            Variant::G | Variant::U => eps * eps,
            Variant::L => (eps * eps).min(self.rho * t * t),
        }
    }

    pub fn solve(
        &self,
        problem: &CompositeProblem,
        x: &StiefelPoint,
        l_tilde: f64,
        k: usize,
        warm: Option<&NormalCoords>,
    ) -> Result<ProxSolution> {
        match self.variant {
            Variant::G => solve_ssn_global(problem, x, l_tilde, &self.phi, &self.ssn, warm),
            Variant::U | Variant::L => {
                let psi = |t: f64| self.psi_bound(k, t);
                solve_prox_local(problem, x, l_tilde, &psi, &self.local, None, warm)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Stop once `||eta_k|| L_k <= factor * ||eta_0|| L_0`.
    Stationarity { factor: f64 },
    /// Stop once `F(x_k) <= value`.
    Target { value: f64 },
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub l_tilde_0: f64,
    pub l_tilde_min: f64,
    pub l_tilde_max: f64,
    /// Largest proximal parameter reachable by escalation.
    pub escalation_ceiling: f64,
    pub escalation_factor: f64,
    pub backtrack_factor: f64,
    pub backtrack_fail_limit: usize,
    pub max_outer: usize,
    pub stop: StopRule,
    /// Barzilai-Borwein update of the proximal parameter; off keeps it fixed.
    pub adaptive: bool,
}

impl SolverConfig {
    pub fn new(l_tilde_0: f64) -> Self {
        Self {
            l_tilde_0,
            l_tilde_min: 1e-3,
            l_tilde_max: l_tilde_0,
            escalation_ceiling: 1e3 * l_tilde_0,
            escalation_factor: 1.5,
            backtrack_factor: 0.5,
            backtrack_fail_limit: 5,
            max_outer: 5000,
            stop: StopRule::Stationarity { factor: 1e-3 },
            adaptive: true,
        }
    }

    /// Proximal parameter held at `l_tilde` except for escalations.
    pub fn fixed(l_tilde: f64) -> Self {
        Self { l_tilde_min: l_tilde, adaptive: false, ..Self::new(l_tilde) }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.l_tilde_min > 0.0
            && self.l_tilde_min <= self.l_tilde_0
            && self.l_tilde_0 <= self.l_tilde_max
            && self.escalation_ceiling >= self.l_tilde_max
            && self.escalation_factor > 1.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.backtrack_fail_limit >= 1;
        if ok {
            Ok(())
        } else {
            Err(IrpgError::InvalidParameter(format!("inconsistent solver configuration {self:?}")))
        }
    }
}

/// Safeguarded Barzilai-Borwein value `clamp(|<y,y>/<y,s>|, min, max)`;
/// `fallback` when `<y,s> = 0`.
pub fn bb_stepsize(y: &TangentVector, s: &TangentVector, l_min: f64, l_max: f64, fallback: f64) -> f64 {
    let ys = inner(y, s);
    if ys == 0.0 || !ys.is_finite() {
        return fallback;
    }
    let ratio = (inner(y, y) / ys).abs();
    if !ratio.is_finite() {
        return fallback;
    }
    ratio.max(l_min).min(l_max)
}

#[derive(Clone, Debug)]
pub struct BacktrackOutcome {
    /// Accepted step, or the last one tried on failure.
    pub alpha: f64,
    pub point: Option<StiefelPoint>,
    pub value: f64,
    pub fail_count: usize,
}

impl BacktrackOutcome {
    pub fn accepted(&self) -> bool {
        self.point.is_some()
    }
}

/// First `alpha` in `1, factor, factor^2, ...` with `F(R_x(alpha eta)) < F(x)`,
/// giving up after `limit` trials.
pub fn backtrack(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    eta: &TangentVector,
    f_x: f64,
    factor: f64,
    limit: usize,
) -> Result<BacktrackOutcome> {
    let mut alpha = 1.0;
    for trial in 0..limit {
        let y = x.retract(&(eta * alpha))?;
        let value = problem.value(&y);
        if value < f_x {
            return Ok(BacktrackOutcome { alpha, point: Some(y), value, fail_count: trial });
        }
        if trial + 1 < limit {
            alpha *= factor;
        }
    }
    Ok(BacktrackOutcome { alpha, point: None, value: f_x, fail_count: limit })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Stationarity rule met (or an exactly zero direction).
    Converged,
    TargetReached,
    CapReached,
    /// Backtracking kept failing with the proximal parameter at its ceiling.
    EscalationExhausted,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::TargetReached => "target-reached",
            RunStatus::CapReached => "cap-reached",
            RunStatus::EscalationExhausted => "escalation-exhausted",
        }
    }

    /// Whether the run ended by its stopping rule.
    pub fn is_success(&self) -> bool {
        matches!(self, RunStatus::Converged | RunStatus::TargetReached)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One accepted step `x_k -> x_{k+1} = R_{x_k}(alpha_k eta_k)`.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub k: usize,
    /// `F(x_k)`.
    pub value: f64,
    pub eta_norm: f64,
    pub l_tilde: f64,
    pub alpha: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub certificate: Certificate,
    pub elapsed: f64,
    pub model_at_zero: f64,
    pub model_at_eta: f64,
    /// `||r~~||` for residual certificates, NaN otherwise.
    pub residual_norm: f64,
    /// `psi(||c||)` for residual certificates, NaN otherwise.
    pub psi_bound: f64,
    pub c_norm: f64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub variant: Variant,
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
    pub initial_value: f64,
    pub final_point: StiefelPoint,
    pub final_value: f64,
    /// Direction norm computed at the final iterate, when the run stopped there.
    pub final_eta_norm: Option<f64>,
    pub final_l_tilde: f64,
    /// `||eta_0|| L_0`.
    pub baseline: Option<f64>,
    pub elapsed: f64,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// `F(x_{k+1})` for row `k`.
    pub fn value_after(&self, k: usize) -> f64 {
        self.rows.get(k + 1).map_or(self.final_value, |r| r.value)
    }

    pub fn best_value(&self) -> f64 {
        self.rows.iter().map(|r| r.value).fold(self.final_value, f64::min)
    }

    /// Direction norms in iteration order, including the final one when known.
    pub fn eta_norms(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.eta_norm).collect();
        out.extend(self.final_eta_norm);
        out
    }

    pub const CSV_HEADER: [&'static str; 14] = [
        "k",
        "F",
        "eta_norm",
        "l_tilde",
        "alpha",
        "inner_iters",
        "outer_iters",
        "certificate",
        "elapsed_s",
        "model_at_zero",
        "model_at_eta",
        "residual_norm",
        "psi_bound",
        "c_norm",
    ];

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.value.to_string(),
                r.eta_norm.to_string(),
                r.l_tilde.to_string(),
                r.alpha.to_string(),
                r.inner_iters.to_string(),
                r.outer_iters.to_string(),
                r.certificate.as_str().to_string(),
                r.elapsed.to_string(),
                r.model_at_zero.to_string(),
                r.model_at_eta.to_string(),
                r.residual_norm.to_string(),
                r.psi_bound.to_string(),
                r.c_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run the method from `x0` until the stopping rule, the iteration cap, or an
/// exhausted escalation.
pub fn irpg_run(
    problem: &CompositeProblem,
    x0: StiefelPoint,
    config: &SolverConfig,
    policy: &AccuracyPolicy,
) -> Result<RunTrace> {
    irpg_run_observed(problem, x0, config, policy, |_| {})
}

/// Subproblem solution that produced an accepted step.
pub struct StepObservation<'a> {
    pub k: usize,
    pub point: &'a StiefelPoint,
    pub l_tilde: f64,
    pub solution: &'a ProxSolution,
}

/// [`irpg_run`] calling `observe` once per accepted step, before moving on.
pub fn irpg_run_observed(
    problem: &CompositeProblem,
    x0: StiefelPoint,
    config: &SolverConfig,
    policy: &AccuracyPolicy,
    mut observe: impl FnMut(StepObservation<'_>),
) -> Result<RunTrace> {
    config.validate()?;
    problem.check_point(&x0)?;
    let clock = Instant::now();
    let initial_value = problem.value(&x0);
    let mut x = x0;
    let mut f = initial_value;
    let mut l = config.l_tilde_0;
    let mut warm: Option<NormalCoords> = None;
    let mut baseline: Option<f64> = None;
    let mut rows = Vec::new();

    let finish = |rows: Vec<TraceRow>, x: StiefelPoint, f: f64, l: f64, status, eta: Option<f64>, baseline| RunTrace {
        variant: policy.variant,
        rows,
        status,
        initial_value,
        final_point: x,
        final_value: f,
        final_eta_norm: eta,
        final_l_tilde: l,
        baseline,
        elapsed: clock.elapsed().as_secs_f64(),
    };

    if let StopRule::Target { value } = config.stop {
        if f <= value {
            return Ok(finish(rows, x, f, l, RunStatus::TargetReached, None, baseline));
        }
    }

    for k in 0..config.max_outer {
        let (sol, step) = loop {
            let sol = match policy.solve(problem, &x, l, k, warm.as_ref()) {
                Ok(sol) => sol,
                Err(IrpgError::Escalate { .. }) => {
                    if l >= config.escalation_ceiling {
                        return Ok(finish(rows, x, f, l, RunStatus::EscalationExhausted, None, baseline));
                    }
                    l = (l * config.escalation_factor).min(config.escalation_ceiling);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let eta_norm = sol.eta_norm();
            if eta_norm == 0.0 {
                return Ok(finish(rows, x, f, l, RunStatus::Converged, Some(0.0), baseline));
            }
            if let StopRule::Stationarity { factor } = config.stop {
                let measure = eta_norm * l;
                let base = *baseline.get_or_insert(measure);
                if k > 0 && measure <= factor * base {
                    return Ok(finish(rows, x, f, l, RunStatus::Converged, Some(eta_norm), baseline));
                }
            }
            let step = backtrack(problem, &x, &sol.eta_hat, f, config.backtrack_factor, config.backtrack_fail_limit)?;
            if step.accepted() {
                break (sol, step);
            }
            if l >= config.escalation_ceiling {
                return Ok(finish(rows, x, f, l, RunStatus::EscalationExhausted, Some(eta_norm), baseline));
            }
            l = (l * config.escalation_factor).min(config.escalation_ceiling);
        };

        observe(StepObservation { k, point: &x, l_tilde: l, solution: &sol });
        let next = step.point.expect("accepted step");
        rows.push(TraceRow {
            k,
            value: f,
            eta_norm: sol.eta_norm(),
            l_tilde: l,
            alpha: step.alpha,
            inner_iters: sol.inner_iters,
            outer_iters: sol.outer_iters,
            certificate: sol.certificate,
            elapsed: clock.elapsed().as_secs_f64(),
            model_at_zero: sol.model_at_zero,
            model_at_eta: sol.model_at_eta,
            residual_norm: sol.residual_norm.unwrap_or(f64::NAN),
            psi_bound: sol.psi_bound.unwrap_or(f64::NAN),
            c_norm: sol.coords.as_ref().map_or(f64::NAN, |c| c.norm()),
        });

        if config.adaptive {
            let g_old = problem.rgrad(&x);
            let g_new = x.proj_tangent(&problem.rgrad(&next))?;
            let y = g_new - g_old;
            let s = &sol.eta_hat * step.alpha;
            l = bb_stepsize(&y, &s, config.l_tilde_min, config.l_tilde_max, l);
        }
        warm = Some(sol.lambda_hat);
        x = next;
        f = step.value;

        if let StopRule::Target { value } = config.stop {
            if f <= value {
                return Ok(finish(rows, x, f, l, RunStatus::TargetReached, None, baseline));
            }
        }
    }
    Ok(finish(rows, x, f, l, RunStatus::CapReached, None, baseline))
}
