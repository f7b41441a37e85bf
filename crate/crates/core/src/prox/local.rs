use crate::error::{IrpgError, Result};
use crate::linalg::inner;
use crate::manifold::{NormalCoords, StiefelPoint, TangentCoords, TangentVector};
use crate::objective::CompositeProblem;
use crate::prox::ssn::{SsnOptions, TangentProx, Verdict};
use crate::prox::{Certificate, ProxSolution};

#[derive(Clone, Debug)]
pub struct LocalOptions {
    /// Relative accuracy `delta_r` of each linearized residual solve.
    pub delta_r: f64,
    /// Cap on coordinate fixed-point iterations.
    pub max_outer: usize,
    /// The inner Newton solve stops once `||Psi|| <= inner_rel * delta_r * ||u||`.
    pub inner_rel: f64,
    pub ssn: SsnOptions,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { delta_r: 0.1, max_outer: 200, inner_rel: 0.1, ssn: SsnOptions::default() }
    }
}

impl LocalOptions {
    fn validate(&self) -> Result<()> {
        if !(self.delta_r > 0.0 && self.delta_r < 1.0) {
            return Err(IrpgError::InvalidParameter(format!("delta_r must lie in (0, 1), got {}", self.delta_r)));
        }
        Ok(())
    }
}

/// Approximate linearized residual `r~~_x(c)` with `||r~~ - r~|| <~ delta_r ||r~~||`.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub c: TangentCoords,
    pub r_tilde: TangentCoords,
    pub r_tilde_norm: f64,
    pub delta_r: f64,
    /// Multiplier of the linearized problem at `R_x(Q_x c)`.
    pub lambda: NormalCoords,
    pub psi_norm: f64,
    pub inner_iters: usize,
}

/// The proximal mapping in tangent coordinates,
/// `J_x(c) = <c, Q_x^T grad f(x)> + L/2 ||c||^2 + g(R_x(Q_x c))`.
pub struct CoordinateSubproblem<'a> {
    problem: &'a CompositeProblem,
    x: &'a StiefelPoint,
    grad: TangentVector,
    l_tilde: f64,
}

impl<'a> CoordinateSubproblem<'a> {
    pub fn new(problem: &'a CompositeProblem, x: &'a StiefelPoint, l_tilde: f64) -> Result<Self> {
        problem.check_point(x)?;
        if !(l_tilde > 0.0) {
            return Err(IrpgError::InvalidParameter(format!("proximal parameter must be positive, got {l_tilde}")));
        }
        Ok(Self { problem, x, grad: problem.rgrad(x), l_tilde })
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn objective(&self, c: &TangentCoords) -> Result<f64> {
        let eta = self.x.tangent_apply(c)?;
        let y = self.x.retract(&eta)?;
        Ok(inner(&eta, &self.grad) + 0.5 * self.l_tilde * c.0.norm_squared() + self.problem.nonsmooth().eval(y.matrix()))
    }

    /// Minimize the residual model with the retraction linearized at
    /// `y = R_x(Q_x c)`:
    ///
    /// ```text
    /// min_v <Q_x v, grad f(x) + L Q_x c> + L/2 ||T Q_x v||^2 + g(y + T Q_x v)
    /// ```
    ///
    /// With `u = T Q_x v` this is the linearized proximal problem at `y` with
    /// gradient `T^{-#}(grad f(x) + L Q_x c)`, solved by semismooth Newton.
    pub fn residual(&self, c: &TangentCoords, opts: &LocalOptions, warm: Option<&NormalCoords>) -> Result<ResidualReport> {
        opts.validate()?;
        let eta_c = self.x.tangent_apply(c)?;
        let step = self.x.polar_step(&eta_c)?;
        let h = &self.grad + &eta_c * self.l_tilde;
        let grad_y = step.transport_inverse_adjoint(&h)?;
        let y = step.target();
        let floor = 1e-12 * (1.0 + grad_y.norm() / self.l_tilde);
        let tp = TangentProx::new(y, grad_y, self.l_tilde, self.problem.nonsmooth())?;
        let lambda0 = match warm {
            Some(l) if l.0.len() == y.normal_dim() => l.clone(),
            _ => NormalCoords::zeros(y.normal_dim()),
        };
        let tol_rel = opts.inner_rel * opts.delta_r;
        let mut trace = Vec::new();
        let (state, iters) = tp.run(lambda0, &opts.ssn, &mut trace, |s| {
            let u_norm = y.proj_tangent_unchecked(&s.v).norm();
            Ok(if s.psi_norm <= (tol_rel * u_norm).max(floor) { Verdict::Accept } else { Verdict::Continue })
        })?;
        let u = y.proj_tangent_unchecked(&state.v);
        let r = self.x.tangent_adjoint(&step.transport_inverse(&u)?)?;
        let r_tilde_norm = r.norm();
        Ok(ResidualReport {
            c: c.clone(),
            r_tilde: r,
            r_tilde_norm,
            delta_r: opts.delta_r,
            lambda: state.lambda,
            psi_norm: state.psi_norm,
            inner_iters: iters,
        })
    }
}

/// `r~~_x(c)` for `problem` at `x`.
pub fn residual_tilde(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    c: &TangentCoords,
    l_tilde: f64,
    opts: &LocalOptions,
) -> Result<ResidualReport> {
    CoordinateSubproblem::new(problem, x, l_tilde)?.residual(c, opts, None)
}

/// Proximal direction certified by `||r~_x(c)|| <= psi(||c||)`.
///
/// Runs `c <- c + r~~_x(c)` from `start` (zero by default) and accepts the
/// first iterate with `||r~~|| <= psi(||c||) / (1 + delta_r)` whose direction
/// `Q_x c` does not increase the model `l_x`. The zero direction is accepted
/// only when its residual vanishes, i.e. at a stationary point.
pub fn solve_prox_local(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    l_tilde: f64,
    psi_bound: &dyn Fn(f64) -> f64,
    opts: &LocalOptions,
    start: Option<&TangentCoords>,
    warm: Option<&NormalCoords>,
) -> Result<ProxSolution> {
    opts.validate()?;
    let sub = CoordinateSubproblem::new(problem, x, l_tilde)?;
    let model = problem.model_at(x, l_tilde)?;
    let ell_zero = model.ell_zero();
    let mut c = match start {
        Some(s) if s.0.len() == sub.dim() => s.clone(),
        Some(s) => return Err(IrpgError::LengthMismatch { expected: sub.dim(), got: s.0.len() }),
        None => TangentCoords::zeros(sub.dim()),
    };
    let mut lambda = warm.cloned();
    let mut inner_iters = 0;
    for outer in 0..opts.max_outer {
        let rep = sub.residual(&c, opts, lambda.as_ref())?;
        inner_iters += rep.inner_iters;
        lambda = Some(rep.lambda.clone());
        let c_norm = c.norm();
        let bound = psi_bound(c_norm);
        let idle = c_norm == 0.0 && rep.r_tilde_norm > 0.0;
        if !idle && rep.r_tilde_norm <= bound / (1.0 + opts.delta_r) {
            let eta = x.tangent_apply(&c)?;
            let ell_eta = model.ell(&eta)?;
            if ell_zero >= ell_eta {
                return Ok(ProxSolution {
                    eta_hat: eta,
                    lambda_hat: rep.lambda,
                    psi_norm: rep.psi_norm,
                    model_at_zero: ell_zero,
                    model_at_eta: ell_eta,
                    certificate: Certificate::Local,
                    inner_iters,
                    outer_iters: outer + 1,
                    coords: Some(c),
                    residual_norm: Some(rep.r_tilde_norm),
                    psi_bound: Some(bound),
                    trace: Vec::new(),
                });
            }
        }
        c = TangentCoords(&c.0 + &rep.r_tilde.0);
    }
    Err(IrpgError::Escalate { iterations: opts.max_outer })
}
