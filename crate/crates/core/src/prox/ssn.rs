use nalgebra::{DMatrix, DVector};

use crate::error::{IrpgError, Result};
use crate::linalg::{conjugate_gradient, Mat};
use crate::manifold::{NormalCoords, StiefelPoint, TangentVector};
use crate::objective::{CompositeProblem, NonsmoothCost};
use crate::prox::{Certificate, ProxSolution, SsnTraceRow};

/// Regularized semismooth Newton parameters.
#[derive(Clone, Debug)]
pub struct SsnOptions {
    pub max_iter: usize,
    /// Upper bound on the regularization `mu = min(mu_cap, ||Psi||)`.
    pub mu_cap: f64,
    /// Lower bound on `mu`.
    pub mu_floor: f64,
    /// Sufficient decrease factor on `||Psi||^2`.
    pub armijo: f64,
    pub max_halvings: usize,
    /// Above this normal dimension the Newton system is solved by CG.
    pub dense_limit: usize,
    pub record_trace: bool,
}

impl Default for SsnOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            mu_cap: 0.1,
            mu_floor: 0.0,
            armijo: 1e-4,
            max_halvings: 30,
            dense_limit: 2000,
            record_trace: false,
        }
    }
}

/// The linearized proximal problem
/// `min_{B^T eta = 0} <grad, eta> + L/2 ||eta||^2 + g(x + eta)` at a point,
/// for an arbitrary tangent `grad`.
pub struct TangentProx<'a> {
    point: &'a StiefelPoint,
    grad: TangentVector,
    l_tilde: f64,
    g: &'a dyn NonsmoothCost,
}

pub(crate) struct SsnState {
    pub lambda: NormalCoords,
    pub v: Mat,
    pub psi: NormalCoords,
    pub psi_norm: f64,
}

pub(crate) enum Verdict {
    Accept,
    Continue,
    /// Give up immediately and ask the caller to escalate.
    Abort,
}

impl<'a> TangentProx<'a> {
    pub fn new(point: &'a StiefelPoint, grad: TangentVector, l_tilde: f64, g: &'a dyn NonsmoothCost) -> Result<Self> {
        crate::error::check_shape(point.shape(), grad.shape())?;
        if !(l_tilde > 0.0) {
            return Err(IrpgError::InvalidParameter(format!("proximal parameter must be positive, got {l_tilde}")));
        }
        Ok(Self { point, grad, l_tilde, g })
    }

    pub fn point(&self) -> &StiefelPoint {
        self.point
    }

    pub fn grad(&self) -> &TangentVector {
        &self.grad
    }

    fn shifted(&self, lambda: &NormalCoords) -> Result<Mat> {
        let b_lambda = self.point.normal_apply(lambda)?;
        Ok(self.point.matrix() - (&self.grad - b_lambda) / self.l_tilde)
    }

    /// `v(Lambda) = Prox_{g/L}(x - (grad - B Lambda)/L) - x`.
    pub fn v_of_lambda(&self, lambda: &NormalCoords) -> Result<Mat> {
        let z = self.shifted(lambda)?;
        Ok(self.g.prox(&z, 1.0 / self.l_tilde)? - self.point.matrix())
    }

    /// `Psi(Lambda) = B^T v(Lambda)`.
    pub fn psi(&self, lambda: &NormalCoords) -> Result<NormalCoords> {
        self.point.normal_adjoint(&self.v_of_lambda(lambda)?)
    }

    fn mask(&self, lambda: &NormalCoords) -> Result<Mat> {
        Ok(self.g.prox_jacobian_mask(&self.shifted(lambda)?, 1.0 / self.l_tilde))
    }

    fn apply_with_mask(&self, mask: &Mat, d: &DVector<f64>) -> Result<DVector<f64>> {
        let bd = self.point.normal_apply(&NormalCoords(d.clone()))?;
        Ok(self.point.normal_adjoint(&mask.component_mul(&bd))?.0 / self.l_tilde)
    }

    /// Generalized Jacobian `J[d] = B^T (Sigma .* (B d)) / L`.
    pub fn jacobian_apply(&self, lambda: &NormalCoords, d: &NormalCoords) -> Result<NormalCoords> {
        let mask = self.mask(lambda)?;
        Ok(NormalCoords(self.apply_with_mask(&mask, &d.0)?))
    }

    /// Dense generalized Jacobian.
    pub fn jacobian(&self, lambda: &NormalCoords) -> Result<DMatrix<f64>> {
        let mask = self.mask(lambda)?;
        let k = self.point.normal_dim();
        let mut out = DMatrix::zeros(k, k);
        let mut e = DVector::zeros(k);
        for j in 0..k {
            e[j] = 1.0;
            out.set_column(j, &self.apply_with_mask(&mask, &e)?);
            e[j] = 0.0;
        }
        Ok(out)
    }

    fn state(&self, lambda: NormalCoords) -> Result<SsnState> {
        let v = self.v_of_lambda(&lambda)?;
        let psi = self.point.normal_adjoint(&v)?;
        let psi_norm = psi.norm();
        Ok(SsnState { lambda, v, psi, psi_norm })
    }

    fn newton_direction(&self, state: &SsnState, mu: f64, opts: &SsnOptions) -> Result<DVector<f64>> {
        let rhs = -&state.psi.0;
        let k = rhs.len();
        if k <= opts.dense_limit {
            let mut j = self.jacobian(&state.lambda)?;
            for i in 0..k {
                j[(i, i)] += mu;
            }
            if let Some(ch) = j.clone().cholesky() {
                return Ok(ch.solve(&rhs));
            }
            return j
                .lu()
                .solve(&rhs)
                .ok_or_else(|| IrpgError::Singular("semismooth Newton system".into()));
        }
        let mask = self.mask(&state.lambda)?;
        let apply = |d: &DVector<f64>| {
            let mut out = self.apply_with_mask(&mask, d).expect("length checked");
            out.axpy(mu, d, 1.0);
            out
        };
        Ok(conjugate_gradient(apply, &rhs, 1e-12, 10 * k))
    }

    /// Newton iterations from `lambda0` until `||Psi|| <= tol`. Returns the
    /// root and the number of iterations taken.
    pub fn solve_to_tolerance(&self, lambda0: NormalCoords, opts: &SsnOptions, tol: f64) -> Result<(NormalCoords, usize)> {
        let mut trace = Vec::new();
        let (state, iters) = self.run(lambda0, opts, &mut trace, |s| {
            Ok(if s.psi_norm <= tol { Verdict::Accept } else { Verdict::Continue })
        })?;
        Ok((state.lambda, iters))
    }

    /// Regularized semismooth Newton with a halving line search on `||Psi||^2`.
    ///
    /// `accept` is consulted at every iterate, including the starting one.
    pub(crate) fn run(
        &self,
        lambda0: NormalCoords,
        opts: &SsnOptions,
        trace: &mut Vec<SsnTraceRow>,
        mut accept: impl FnMut(&SsnState) -> Result<Verdict>,
    ) -> Result<(SsnState, usize)> {
        let mut state = self.state(lambda0)?;
        for it in 0..=opts.max_iter {
            match accept(&state)? {
                Verdict::Accept => return Ok((state, it)),
                Verdict::Abort => return Err(IrpgError::Escalate { iterations: it }),
                Verdict::Continue => {}
            }
            if it == opts.max_iter {
                break;
            }
            let mu = state.psi_norm.min(opts.mu_cap).max(opts.mu_floor);
            let d = self.newton_direction(&state, mu, opts)?;
            let base = state.psi_norm * state.psi_norm;
            let mut t = 1.0;
            let mut best: Option<(SsnState, f64)> = None;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let cand = self.state(NormalCoords(&state.lambda.0 + &d * t))?;
                let merit = cand.psi_norm * cand.psi_norm;
                if merit <= (1.0 - opts.armijo * t) * base {
                    accepted = Some((cand, t));
                    break;
                }
                if best.as_ref().is_none_or(|(b, _)| cand.psi_norm < b.psi_norm) {
                    best = Some((cand, t));
                }
                t *= 0.5;
            }
            let (next, step) = match accepted {
                Some(a) => a,
                None => match best {
                    Some((b, s)) if b.psi_norm < state.psi_norm => (b, s),
                    // no progress possible from here
                    _ => return Err(IrpgError::Escalate { iterations: it }),
                },
            };
            if opts.record_trace {
                trace.push(SsnTraceRow { iteration: it + 1, psi_norm: next.psi_norm, mu, step });
            }
            state = next;
        }
        Err(IrpgError::Escalate { iterations: opts.max_iter })
    }
}

/// `v(Lambda)` for the proximal problem of `problem` at `x`.
pub fn v_of_lambda(problem: &CompositeProblem, x: &StiefelPoint, l_tilde: f64, lambda: &NormalCoords) -> Result<Mat> {
    problem.check_point(x)?;
    TangentProx::new(x, problem.rgrad(x), l_tilde, problem.nonsmooth())?.v_of_lambda(lambda)
}

/// `Psi(Lambda) = B_x^T v(Lambda)`.
pub fn psi(problem: &CompositeProblem, x: &StiefelPoint, l_tilde: f64, lambda: &NormalCoords) -> Result<NormalCoords> {
    problem.check_point(x)?;
    TangentProx::new(x, problem.rgrad(x), l_tilde, problem.nonsmooth())?.psi(lambda)
}

/// Generalized Jacobian of `Psi` at `lambda` applied to `d`.
pub fn psi_jacobian_apply(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    l_tilde: f64,
    lambda: &NormalCoords,
    d: &NormalCoords,
) -> Result<NormalCoords> {
    problem.check_point(x)?;
    TangentProx::new(x, problem.rgrad(x), l_tilde, problem.nonsmooth())?.jacobian_apply(lambda, d)
}

/// Proximal direction certified by `||Psi|| <= min(phi(||eta||), 0.5)` and
/// `l_x(0) >= l_x(eta)`, with `eta = P_{T_x M} v(Lambda)`.
///
/// Returns [`IrpgError::Escalate`] when no certified iterate is found within
/// `opts.max_iter` Newton steps, or when `Psi` is solved to roundoff but the
/// model still increases (the proximal parameter is too small).
pub fn solve_ssn_global(
    problem: &CompositeProblem,
    x: &StiefelPoint,
    l_tilde: f64,
    phi: &dyn Fn(f64) -> f64,
    opts: &SsnOptions,
    warm_start: Option<&NormalCoords>,
) -> Result<ProxSolution> {
    let model = problem.model_at(x, l_tilde)?;
    let tp = TangentProx::new(x, model.grad().clone(), l_tilde, problem.nonsmooth())?;
    let lambda0 = match warm_start {
        Some(l) if l.0.len() == x.normal_dim() => l.clone(),
        _ => NormalCoords::zeros(x.normal_dim()),
    };
    let ell_zero = model.ell_zero();
    let mut found: Option<(TangentVector, f64)> = None;
    let mut trace = Vec::new();
    let (state, iters) = tp.run(lambda0, opts, &mut trace, |s| {
        let eta = x.proj_tangent_unchecked(&s.v);
        if s.psi_norm > phi(eta.norm()).min(0.5) {
            return Ok(Verdict::Continue);
        }
        let ell_eta = model.ell(&eta)?;
        if ell_zero >= ell_eta {
            found = Some((eta, ell_eta));
            return Ok(Verdict::Accept);
        }
        // Psi solved to roundoff yet the model increases: Newton cannot help
        let floor = 1e-14 * (1.0 + s.v.norm());
        Ok(if s.psi_norm <= floor { Verdict::Abort } else { Verdict::Continue })
    })?;
    let (eta_hat, model_at_eta) = found.expect("accepted state carries a direction");
    Ok(ProxSolution {
        eta_hat,
        lambda_hat: state.lambda,
        psi_norm: state.psi_norm,
        model_at_zero: ell_zero,
        model_at_eta,
        certificate: Certificate::Global,
        inner_iters: iters,
        outer_iters: 0,
        coords: None,
        residual_norm: None,
        psi_bound: None,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;
    use crate::objective::ZeroCost;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
        Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn instance(seed: u64, n: usize, p: usize, lambda: f64) -> (CompositeProblem, StiefelPoint) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = CompositeProblem::spca(gauss(&mut rng, 6, n), p, lambda).unwrap();
        let x = StiefelPoint::from_polar(gauss(&mut rng, n, p)).unwrap();
        (problem, x)
    }

    fn coords(rng: &mut ChaCha8Rng, k: usize) -> NormalCoords {
        NormalCoords(DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn linear_case_has_closed_form_root() {
        let (problem, x) = instance(1, 8, 2, 0.0);
        let l = 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let egrad = problem.smooth().egrad(x.matrix());
        let rgrad = problem.rgrad(&x);
        let lam = coords(&mut rng, 3);
        // v(Lambda) = -(grad - B Lambda)/L when g = 0
        let v = v_of_lambda(&problem, &x, l, &lam).unwrap();
        let expected = -(&rgrad - x.normal_apply(&lam).unwrap()) / l;
        assert_relative_eq!(v, expected, epsilon = 1e-14);
        // root of Psi is B^T grad; the Riemannian gradient has no normal part
        let root = x.normal_adjoint(&rgrad).unwrap();
        assert!(psi(&problem, &x, l, &root).unwrap().norm() < 1e-14);
        assert!(root.norm() < 1e-12);
        // with the Euclidean gradient in the model the root is B^T egrad
        let tp = TangentProx::new(&x, egrad.clone(), l, &ZeroCost).unwrap();
        let root_e = x.normal_adjoint(&egrad).unwrap();
        assert!(tp.psi(&root_e).unwrap().norm() < 1e-13);
        assert!(x.tangency_residual(&tp.v_of_lambda(&root_e).unwrap()) < 1e-10);
    }

    #[test]
    fn linear_case_converges_in_one_newton_step() {
        let (problem, x) = instance(2, 8, 2, 0.0);
        let l = 5.0;
        let egrad = problem.smooth().egrad(x.matrix());
        let tp = TangentProx::new(&x, egrad.clone(), l, &ZeroCost).unwrap();
        let opts = SsnOptions { mu_cap: 0.0, ..Default::default() };
        let mut trace = Vec::new();
        let (state, iters) = tp
            .run(NormalCoords::zeros(3), &opts, &mut trace, |s| {
                Ok(if s.psi_norm <= 1e-12 { Verdict::Accept } else { Verdict::Continue })
            })
            .unwrap();
        assert_eq!(iters, 1);
        assert_relative_eq!(state.lambda.0, x.normal_adjoint(&egrad).unwrap().0, epsilon = 1e-10);
    }

    #[test]
    fn psi_is_bounded_by_v() {
        let (problem, x) = instance(3, 8, 3, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let lam = coords(&mut rng, 6);
            let v = v_of_lambda(&problem, &x, 2.0, &lam).unwrap();
            assert!(psi(&problem, &x, 2.0, &lam).unwrap().norm() <= v.norm() + 1e-14);
            // recomposition through the prox oracle
            let z = x.matrix() - (problem.rgrad(&x) - x.normal_apply(&lam).unwrap()) / 2.0;
            let direct = problem.nonsmooth().prox(&z, 0.5).unwrap() - x.matrix();
            assert_relative_eq!(v, direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn fixed_point_without_gradient_or_penalty() {
        let (_, x) = instance(4, 6, 2, 0.0);
        let tp = TangentProx::new(&x, Mat::zeros(6, 2), 3.0, &ZeroCost).unwrap();
        assert!(tp.v_of_lambda(&NormalCoords::zeros(3)).unwrap().norm() < 1e-15);
    }

    #[test]
    fn jacobian_special_cases() {
        let (_, x) = instance(5, 6, 2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = coords(&mut rng, 3);
        // all active
        let tp = TangentProx::new(&x, Mat::zeros(6, 2), 4.0, &ZeroCost).unwrap();
        let jd = tp.jacobian_apply(&NormalCoords::zeros(3), &d).unwrap();
        assert_relative_eq!(jd.0, &d.0 / 4.0, epsilon = 1e-14);
        // nothing active: the threshold exceeds every entry
        let g = crate::objective::L1Norm::new(100.0).unwrap();
        let tp = TangentProx::new(&x, Mat::zeros(6, 2), 4.0, &g).unwrap();
        assert_eq!(tp.jacobian_apply(&NormalCoords::zeros(3), &d).unwrap().norm(), 0.0);
    }

    #[test]
    fn jacobian_matches_forward_difference_and_is_psd() {
        let (problem, x) = instance(7, 10, 3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = 3.0;
        let tp = TangentProx::new(&x, problem.rgrad(&x), l, problem.nonsmooth()).unwrap();
        let mut checked = 0;
        for _ in 0..20 {
            let lam = coords(&mut rng, 6);
            let d = coords(&mut rng, 6);
            let jd = tp.jacobian_apply(&lam, &d).unwrap();
            assert!(inner(&Mat::from_column_slice(6, 1, d.0.as_slice()), &Mat::from_column_slice(6, 1, jd.0.as_slice())) >= -1e-15);
            // skip points whose FD segment crosses a kink
            let t = 1e-7;
            let shifted = NormalCoords(&lam.0 + &d.0 * t);
            if tp.mask(&lam).unwrap() != tp.mask(&shifted).unwrap() {
                continue;
            }
            let fd = (tp.psi(&shifted).unwrap().0 - tp.psi(&lam).unwrap().0) / t;
            assert!((&fd - &jd.0).norm() <= 1e-5 * (1.0 + jd.0.norm()));
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn global_solve_on_linear_problem_gives_scaled_gradient() {
        let (problem, x) = instance(9, 8, 2, 0.0);
        let l = 50.0;
        let sol = solve_ssn_global(&problem, &x, l, &|t: f64| t.sqrt(), &SsnOptions::default(), None).unwrap();
        let expected = problem.rgrad(&x) * (-1.0 / l);
        assert_relative_eq!(sol.eta_hat, expected, epsilon = 1e-10);
        assert!(sol.inner_iters <= 1);
        assert_eq!(sol.certificate, Certificate::Global);
    }

    #[test]
    fn global_certificate_holds_on_spca() {
        for seed in 0..5 {
            let (problem, x) = instance(20 + seed, 12, 3, 0.4);
            let l = 2.0 * problem.smooth().hessian_bound().unwrap();
            let opts = SsnOptions { record_trace: true, ..Default::default() };
            let sol = solve_ssn_global(&problem, &x, l, &|t: f64| t.sqrt(), &opts, None).unwrap();
            assert!(x.tangency_residual(&sol.eta_hat) <= 1e-10 * (1.0 + sol.eta_norm()));
            assert!(sol.psi_norm <= sol.eta_norm().sqrt().min(0.5));
            assert!(sol.model_at_zero >= sol.model_at_eta);
            assert_eq!(sol.trace.len(), sol.inner_iters);
            let recheck = problem.ell_eval(&x, &sol.eta_hat, l).unwrap();
            assert_relative_eq!(recheck, sol.model_at_eta, epsilon = 1e-12);
        }
    }

    #[test]
    fn tiny_cap_signals_escalation() {
        let (problem, x) = instance(30, 12, 3, 0.4);
        let opts = SsnOptions { max_iter: 0, ..Default::default() };
        // phi = 0 can only be met by an exact root
        let res = solve_ssn_global(&problem, &x, 1.0, &|_| 0.0, &opts, None);
        assert!(matches!(res, Err(IrpgError::Escalate { .. })));
    }
}
