//! Oracles for the composite objective `F = f + g` and the proximal model
//! functions built from them.

use crate::error::{check_shape, IrpgError, Result};
use crate::linalg::{inner, spectral_norm, Mat};
use crate::manifold::{StiefelPoint, TangentVector};

/// Smooth part `f`. Only the Euclidean gradient is required; the Riemannian
/// gradient is its tangent projection.
pub trait SmoothCost: Send + Sync {
    fn eval(&self, x: &Mat) -> f64;

    fn egrad(&self, x: &Mat) -> Mat;

    fn rgrad(&self, x: &StiefelPoint) -> TangentVector {
        x.proj_tangent_unchecked(&self.egrad(x.matrix()))
    }

    /// Upper bound on the Euclidean Hessian norm, when known.
    fn hessian_bound(&self) -> Option<f64> {
        None
    }
}

/// Convex nonsmooth part `g` with an entrywise-separable proximal mapping.
pub trait NonsmoothCost: Send + Sync {
    fn eval(&self, z: &Mat) -> f64;

    /// `argmin_v 0.5 ||v - z||^2 + t g(v)`.
    fn prox(&self, z: &Mat, t: f64) -> Result<Mat>;

    /// Entrywise element of the Clarke generalized Jacobian of `prox(., t)`
    /// at `z`, as a 0/1 mask with the same shape as `z`.
    fn prox_jacobian_mask(&self, z: &Mat, t: f64) -> Mat;

    /// Lipschitz constant with respect to the Frobenius norm on `rows x cols`.
    fn lipschitz(&self, rows: usize, cols: usize) -> f64;
}

/// `f(X) = -trace(X^T A^T A X)`.
#[derive(Clone, Debug)]
pub struct SpcaCost {
    a: Mat,
    // A^T A, kept only when it is cheaper to apply than A and A^T in turn
    gram: Option<Mat>,
    sigma_max: f64,
}

impl SpcaCost {
    pub fn new(a: Mat) -> Self {
        let sigma_max = spectral_norm(&a);
        let gram = (a.nrows() >= a.ncols()).then(|| a.tr_mul(&a));
        Self { a, gram, sigma_max }
    }

    pub fn data(&self) -> &Mat {
        &self.a
    }

    /// Largest singular value of `A`.
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    fn gram_times(&self, x: &Mat) -> Mat {
        match &self.gram {
            Some(g) => g * x,
            None => self.a.tr_mul(&(&self.a * x)),
        }
    }
}

impl SmoothCost for SpcaCost {
    fn eval(&self, x: &Mat) -> f64 {
        match &self.gram {
            Some(g) => -inner(x, &(g * x)),
            None => -(&self.a * x).norm_squared(),
        }
    }

    fn egrad(&self, x: &Mat) -> Mat {
        self.gram_times(x) * -2.0
    }

    /// `2 sigma_max(A)^2`, the spectral norm of the Hessian `-2 A^T A`.
    fn hessian_bound(&self) -> Option<f64> {
        Some(2.0 * self.sigma_max * self.sigma_max)
    }
}

/// `g(X) = lambda * sum |X_ij|`.
#[derive(Clone, Copy, Debug)]
pub struct L1Norm {
    lambda: f64,
}

impl L1Norm {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(IrpgError::InvalidParameter(format!("l1 weight must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn check_step(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(IrpgError::InvalidParameter(format!("prox step must be positive, got {t}")))
    }
}

impl NonsmoothCost for L1Norm {
    fn eval(&self, z: &Mat) -> f64 {
        self.lambda * z.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, z: &Mat, t: f64) -> Result<Mat> {
        check_step(t)?;
        let thr = self.lambda * t;
        Ok(z.map(|v| v.signum() * (v.abs() - thr).max(0.0)))
    }

    /// Ties `|z| = lambda t` resolve to 0.
    fn prox_jacobian_mask(&self, z: &Mat, t: f64) -> Mat {
        let thr = self.lambda * t;
        z.map(|v| if v.abs() > thr { 1.0 } else { 0.0 })
    }

    /// `lambda * sqrt(rows * cols)`.
    fn lipschitz(&self, rows: usize, cols: usize) -> f64 {
        self.lambda * ((rows * cols) as f64).sqrt()
    }
}

/// `g = 0`. Turns the proximal subproblem into a linear system.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroCost;

impl NonsmoothCost for ZeroCost {
    fn eval(&self, _z: &Mat) -> f64 {
        0.0
    }

    fn prox(&self, z: &Mat, t: f64) -> Result<Mat> {
        check_step(t)?;
        Ok(z.clone())
    }

    fn prox_jacobian_mask(&self, z: &Mat, _t: f64) -> Mat {
        Mat::from_element(z.nrows(), z.ncols(), 1.0)
    }

    fn lipschitz(&self, _rows: usize, _cols: usize) -> f64 {
        0.0
    }
}

/// `min F(X) = f(X) + g(X)` over `St(p, n)`.
pub struct CompositeProblem {
    n: usize,
    p: usize,
    smooth: Box<dyn SmoothCost>,
    nonsmooth: Box<dyn NonsmoothCost>,
}

impl CompositeProblem {
    pub fn new(n: usize, p: usize, smooth: Box<dyn SmoothCost>, nonsmooth: Box<dyn NonsmoothCost>) -> Result<Self> {
        if p == 0 || p > n {
            return Err(IrpgError::InvalidParameter(format!("need 1 <= p <= n, got n={n}, p={p}")));
        }
        Ok(Self { n, p, smooth, nonsmooth })
    }

    /// Sparse PCA: `-trace(X^T A^T A X) + lambda ||X||_1`. `lambda = 0` gives
    /// the smooth problem.
    pub fn spca(a: Mat, p: usize, lambda: f64) -> Result<Self> {
        let n = a.ncols();
        let smooth = Box::new(SpcaCost::new(a));
        let nonsmooth: Box<dyn NonsmoothCost> = if lambda == 0.0 { Box::new(ZeroCost) } else { Box::new(L1Norm::new(lambda)?) };
        Self::new(n, p, smooth, nonsmooth)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.p)
    }

    pub fn smooth(&self) -> &dyn SmoothCost {
        self.smooth.as_ref()
    }

    pub fn nonsmooth(&self) -> &dyn NonsmoothCost {
        self.nonsmooth.as_ref()
    }

    pub fn check_point(&self, x: &StiefelPoint) -> Result<()> {
        check_shape((self.n, self.p), x.shape())
    }

    /// `F(x) = f(x) + g(x)`.
    pub fn value(&self, x: &StiefelPoint) -> f64 {
        self.smooth.eval(x.matrix()) + self.nonsmooth.eval(x.matrix())
    }

    pub fn rgrad(&self, x: &StiefelPoint) -> TangentVector {
        self.smooth.rgrad(x)
    }

    pub fn lipschitz_g(&self) -> f64 {
        self.nonsmooth.lipschitz(self.n, self.p)
    }

    /// Proximal models at `x` with the gradient evaluated once.
    pub fn model_at<'a>(&'a self, x: &'a StiefelPoint, l_tilde: f64) -> Result<ProxModel<'a>> {
        self.check_point(x)?;
        if !(l_tilde > 0.0) {
            return Err(IrpgError::InvalidParameter(format!("proximal parameter must be positive, got {l_tilde}")));
        }
        Ok(ProxModel { problem: self, x, grad: self.rgrad(x), l_tilde })
    }

    /// `l_x(eta) = <grad f(x), eta> + L/2 ||eta||^2 + g(R_x(eta))`.
    pub fn ell_eval(&self, x: &StiefelPoint, eta: &TangentVector, l_tilde: f64) -> Result<f64> {
        self.model_at(x, l_tilde)?.ell(eta)
    }

    /// `l~_x(eta) = <grad f(x), eta> + L/2 ||eta||^2 + g(x + eta)`.
    pub fn ell_tilde_eval(&self, x: &StiefelPoint, eta: &TangentVector, l_tilde: f64) -> Result<f64> {
        self.model_at(x, l_tilde)?.ell_tilde(eta)
    }
}

/// The two proximal model functions at a fixed point and proximal parameter.
pub struct ProxModel<'a> {
    problem: &'a CompositeProblem,
    x: &'a StiefelPoint,
    grad: TangentVector,
    l_tilde: f64,
}

impl<'a> ProxModel<'a> {
    pub fn point(&self) -> &StiefelPoint {
        self.x
    }

    pub fn grad(&self) -> &TangentVector {
        &self.grad
    }

    pub fn l_tilde(&self) -> f64 {
        self.l_tilde
    }

    pub fn problem(&self) -> &CompositeProblem {
        self.problem
    }

    fn quadratic(&self, eta: &TangentVector) -> f64 {
        inner(&self.grad, eta) + 0.5 * self.l_tilde * eta.norm_squared()
    }

    /// `l_x(0) = g(x)`.
    pub fn ell_zero(&self) -> f64 {
        self.problem.nonsmooth.eval(self.x.matrix())
    }

    pub fn ell(&self, eta: &TangentVector) -> Result<f64> {
        let y = self.x.retract(eta)?;
        Ok(self.quadratic(eta) + self.problem.nonsmooth.eval(y.matrix()))
    }

    pub fn ell_tilde(&self, eta: &TangentVector) -> Result<f64> {
        check_shape(self.x.shape(), eta.shape())?;
        Ok(self.quadratic(eta) + self.problem.nonsmooth.eval(&(self.x.matrix() + eta)))
    }
}
