//! High-accuracy reference solutions built only from manifold and objective
//! primitives. Nothing here calls into the solver modules under audit.

use irpg_core::manifold::{NormalCoords, StiefelPoint, TangentCoords, TangentVector};
use irpg_core::objective::CompositeProblem;
use irpg_core::{IrpgError, Mat, Result};
use nalgebra::{DMatrix, DVector};

/// Stopping tolerance on `||Psi||`.
pub const ORACLE_TOL: f64 = 1e-12;
/// Lower bound on the Newton regularization.
pub const ORACLE_MU_FLOOR: f64 = 1e-14;
const ORACLE_MAX_ITER: usize = 500;

/// The linearized proximal problem
/// `min_{eta in T_x} <grad, eta> + L/2 ||eta||^2 + g(x + eta)`
/// and its multiplier map.
pub struct LinearizedProx<'a> {
    pub problem: &'a CompositeProblem,
    pub x: &'a StiefelPoint,
    pub grad: TangentVector,
    pub l_tilde: f64,
}

impl LinearizedProx<'_> {
    fn prox_argument(&self, lambda: &NormalCoords) -> Result<Mat> {
        let b_lambda = self.x.normal_apply(lambda)?;
        Ok(self.x.matrix() - (&self.grad - b_lambda) / self.l_tilde)
    }

    /// `v(Lambda) = prox_{g/L}(x - (grad - B Lambda)/L) - x`.
    pub fn v(&self, lambda: &NormalCoords) -> Result<Mat> {
        let z = self.prox_argument(lambda)?;
        let w = self.problem.nonsmooth().prox(&z, 1.0 / self.l_tilde)?;
        Ok(w - self.x.matrix())
    }

    /// `Psi(Lambda) = B^T v(Lambda)`.
    pub fn psi(&self, lambda: &NormalCoords) -> Result<DVector<f64>> {
        Ok(self.x.normal_adjoint(&self.v(lambda)?)?.0)
    }

    fn jacobian(&self, lambda: &NormalCoords) -> Result<DMatrix<f64>> {
        let z = self.prox_argument(lambda)?;
        let mask = self.problem.nonsmooth().prox_jacobian_mask(&z, 1.0 / self.l_tilde);
        let s = self.x.normal_dim();
        let mut jac = DMatrix::zeros(s, s);
        for j in 0..s {
            let mut e = NormalCoords::zeros(s);
            e.0[j] = 1.0;
            let col = self.x.normal_apply(&e)?.component_mul(&mask) / self.l_tilde;
            jac.set_column(j, &self.x.normal_adjoint(&col)?.0);
        }
        Ok(jac)
    }

    /// Runs Newton on `Psi = 0` to `ORACLE_TOL`. Returns the minimizer
    /// `P_x v(Lambda)` and the multiplier.
    pub fn solve(&self, start: Option<&NormalCoords>) -> Result<(TangentVector, NormalCoords)> {
        let s = self.x.normal_dim();
        let mut lambda = start.cloned().unwrap_or_else(|| NormalCoords::zeros(s));
        let mut psi = self.psi(&lambda)?;
        for _ in 0..ORACLE_MAX_ITER {
            let res = psi.norm();
            if res <= ORACLE_TOL {
                let eta = self.x.proj_tangent(&self.v(&lambda)?)?;
                return Ok((eta, lambda));
            }
            let mu = res.clamp(ORACLE_MU_FLOOR, 0.1);
            let mut jac = self.jacobian(&lambda)?;
            for i in 0..s {
                jac[(i, i)] += mu;
            }
            let d = jac
                .lu()
                .solve(&(-&psi))
                .ok_or_else(|| IrpgError::Singular("oracle Newton system".into()))?;
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = NormalCoords(&lambda.0 + &d * step);
                let trial_psi = self.psi(&trial)?;
                if trial_psi.norm_squared() <= (1.0 - 1e-4 * step) * res * res {
                    accepted = Some((trial, trial_psi));
                    break;
                }
                step *= 0.5;
            }
            let Some((next, next_psi)) = accepted else {
                break;
            };
            lambda = next;
            psi = next_psi;
        }
        Err(IrpgError::InvalidParameter(format!(
            "oracle Newton stalled at ||Psi|| = {:.3e}",
            psi.norm()
        )))
    }
}

/// Linearized residual of the coordinate problem at `c`, computed to oracle
/// accuracy: the minimizer over `v` of
/// `<Q v, grad + L Q c> + L/2 ||T Q v||^2 + g(y + T Q v)`, `y = R_x(Q c)`.
pub fn linearized_residual(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    grad: &TangentVector,
    l_tilde: f64,
    c: &TangentCoords,
) -> Result<TangentCoords> {
    let eta_c = x.tangent_apply(c)?;
    let step = x.polar_step(&eta_c)?;
    let h = grad + &eta_c * l_tilde;
    let grad_y = step.transport_inverse_adjoint(&h)?;
    let y = step.target();
    let sub = LinearizedProx { problem, x: y, grad: grad_y, l_tilde };
    let (u, _) = sub.solve(None)?;
    x.tangent_adjoint(&step.transport_inverse(&u)?)
}

/// Stationary point of `J_x(c + .)` reached from `start` by the fixed-point
/// iteration `c <- c + r~(c)` with oracle residuals.
pub fn coordinate_minimizer(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    l_tilde: f64,
    start: &TangentCoords,
    tol: f64,
    max_iter: usize,
) -> Result<TangentCoords> {
    let grad = problem.rgrad(x);
    let mut c = start.clone();
    for _ in 0..max_iter {
        let r = linearized_residual(problem, x, &grad, l_tilde, &c)?;
        let done = r.norm() <= tol;
        c = TangentCoords(&c.0 + &r.0);
        if done {
            return Ok(c);
        }
    }
    Err(IrpgError::InvalidParameter(format!("coordinate oracle did not reach {tol:.1e} in {max_iter} steps")))
}

/// `l_x(eta) = <grad f(x), eta> + L/2 ||eta||^2 + g(R_x(eta))`.
pub fn model_value(problem: &CompositeProblem, x: &StiefelPoint, eta: &TangentVector, l_tilde: f64) -> Result<f64> {
    let grad = problem.rgrad(x);
    let y = x.retract(eta)?;
    Ok(grad.dot(eta) + 0.5 * l_tilde * eta.norm_squared() + problem.nonsmooth().eval(y.matrix()))
}
