//! Stiefel manifold `St(p, n) = { X in R^{n x p} : X^T X = I_p }` with the
//! Euclidean metric.
//!
//! Tangent vectors are plain `n x p` matrices; the base point is carried by
//! the caller. The normal space at `X` is `{ X S : S symmetric }` and is
//! parameterized isometrically through [`svec`](crate::linalg::svec). The
//! tangent basis `Q_X` combines `X W_ij / sqrt(2)` for elementary skew `W_ij`
//! with `X_perp E_kl`, where `X_perp` comes from a Householder QR of `X` and is
//! only ever applied implicitly.

use std::sync::OnceLock;

use nalgebra::DVector;

use crate::error::{check_shape, IrpgError, Result};
use crate::linalg::{skew, solve_lyapunov, svec, svec_inv, svec_len, sym, Mat, OrthoComplement, SpdSqrt};

/// Feasibility tolerance accepted by [`StiefelPoint::new`].
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// An ambient matrix tangent to some base point. The base is implicit.
pub type TangentVector = Mat;

/// Coordinates in the orthonormal normal basis `B_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalCoords(pub DVector<f64>);

/// Coordinates in the orthonormal tangent basis `Q_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentCoords(pub DVector<f64>);

impl NormalCoords {
    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl TangentCoords {
    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

#[derive(Clone, Debug)]
pub struct StiefelPoint {
    x: Mat,
    complement: OnceLock<OrthoComplement>,
}

/// `||X^T X - I||_F`.
pub fn feasibility_residual(x: &Mat) -> f64 {
    let p = x.ncols();
    (x.tr_mul(x) - Mat::identity(p, p)).norm()
}

impl StiefelPoint {
    pub fn new(x: Mat) -> Result<Self> {
        if x.ncols() == 0 || x.ncols() > x.nrows() {
            return Err(IrpgError::InvalidPoint(format!(
                "{}x{} is not a valid Stiefel shape",
                x.nrows(),
                x.ncols()
            )));
        }
        let res = feasibility_residual(&x);
        if !(res <= FEASIBILITY_TOL) {
            return Err(IrpgError::InvalidPoint(format!("columns not orthonormal (residual {res:.3e})")));
        }
        Ok(Self::new_unchecked(x))
    }

    pub(crate) fn new_unchecked(x: Mat) -> Self {
        Self { x, complement: OnceLock::new() }
    }

    /// Orthonormalize an arbitrary full-rank matrix by its polar factor.
    pub fn from_polar(z: Mat) -> Result<Self> {
        let root = SpdSqrt::of_square(&z.tr_mul(&z))?;
        Ok(Self::new_unchecked(z * root.inv_sqrt()))
    }

    pub fn matrix(&self) -> &Mat {
        &self.x
    }

    pub fn into_matrix(self) -> Mat {
        self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x.shape()
    }

    /// Manifold dimension `np - p(p+1)/2`.
    pub fn dim(&self) -> usize {
        self.n() * self.p() - svec_len(self.p())
    }

    /// Normal space dimension `p(p+1)/2`.
    pub fn normal_dim(&self) -> usize {
        svec_len(self.p())
    }

    fn complement(&self) -> &OrthoComplement {
        self.complement
            .get_or_init(|| OrthoComplement::new(&self.x).expect("feasible point has full column rank"))
    }

    /// `||X^T V + V^T X||_F`; zero exactly for tangent `V`.
    pub fn tangency_residual(&self, v: &Mat) -> f64 {
        let xtv = self.x.tr_mul(v);
        (&xtv + xtv.transpose()).norm()
    }

    /// `P_X(Z) = Z - X sym(X^T Z)`.
    pub fn proj_tangent(&self, z: &Mat) -> Result<TangentVector> {
        check_shape(self.shape(), z.shape())?;
        Ok(self.proj_tangent_unchecked(z))
    }

    pub(crate) fn proj_tangent_unchecked(&self, z: &Mat) -> TangentVector {
        z - &self.x * sym(&self.x.tr_mul(z))
    }

    /// Polar retraction `R_X(eta) = (X + eta)(I + eta^T eta)^{-1/2}`.
    pub fn retract(&self, eta: &TangentVector) -> Result<StiefelPoint> {
        Ok(self.polar_step(eta)?.into_target())
    }

    /// Retraction together with the cached factors needed by every transport.
    pub fn polar_step(&self, eta: &TangentVector) -> Result<PolarStep<'_>> {
        check_shape(self.shape(), eta.shape())?;
        PolarStep::new(self, eta)
    }

    /// `B_X^T Z = svec(sym(X^T Z))`.
    pub fn normal_adjoint(&self, z: &Mat) -> Result<NormalCoords> {
        check_shape(self.shape(), z.shape())?;
        Ok(NormalCoords(svec(&sym(&self.x.tr_mul(z)))))
    }

    /// `B_X v = X svec^{-1}(v)`.
    pub fn normal_apply(&self, v: &NormalCoords) -> Result<Mat> {
        if v.0.len() != self.normal_dim() {
            return Err(IrpgError::LengthMismatch { expected: self.normal_dim(), got: v.0.len() });
        }
        Ok(&self.x * svec_inv(&v.0, self.p()))
    }

    /// `Q_X c`.
    pub fn tangent_apply(&self, c: &TangentCoords) -> Result<TangentVector> {
        let (n, p) = self.shape();
        if c.0.len() != self.dim() {
            return Err(IrpgError::LengthMismatch { expected: self.dim(), got: c.0.len() });
        }
        let mut omega = Mat::zeros(p, p);
        let mut idx = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                let a = c.0[idx] / std::f64::consts::SQRT_2;
                omega[(i, j)] = a;
                omega[(j, i)] = -a;
                idx += 1;
            }
        }
        let k = Mat::from_column_slice(n - p, p, &c.0.as_slice()[idx..]);
        Ok(&self.x * omega + self.complement().apply(&k))
    }

    /// `Q_X^T eta`. For non-tangent input this equals `Q_X^T P_X(eta)`.
    pub fn tangent_adjoint(&self, eta: &Mat) -> Result<TangentCoords> {
        check_shape(self.shape(), eta.shape())?;
        let p = self.p();
        let omega = skew(&self.x.tr_mul(eta));
        let k = self.complement().adjoint(eta);
        let mut out = DVector::zeros(self.dim());
        let mut idx = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                out[idx] = std::f64::consts::SQRT_2 * omega[(i, j)];
                idx += 1;
            }
        }
        out.as_mut_slice()[idx..].copy_from_slice(k.as_slice());
        Ok(TangentCoords(out))
    }

    /// Matrix of the differentiated-retraction transport along `eta` in the
    /// bases `Q_X` and `Q_Y`, `Y = R_X(eta)`. Dense `d x d`; intended for small
    /// instances and conditioning checks.
    pub fn transport_matrix(&self, eta: &TangentVector) -> Result<Mat> {
        let step = self.polar_step(eta)?;
        let d = self.dim();
        let mut out = Mat::zeros(d, d);
        let mut e = TangentCoords::zeros(d);
        for j in 0..d {
            e.0[j] = 1.0;
            let xi = self.tangent_apply(&e)?;
            let col = step.target().tangent_adjoint(&step.transport(&xi)?)?;
            out.set_column(j, &col.0);
            e.0[j] = 0.0;
        }
        Ok(out)
    }
}

/// A polar retraction step `X -> Y = (X + eta) M^{-1}` with `M = ((X+eta)^T (X+eta))^{1/2}`.
///
/// All four transports (differentiated retraction `T`, its inverse, adjoint,
/// and inverse adjoint) reduce to `p x p` Sylvester or Lyapunov solves.
#[derive(Clone, Debug)]
pub struct PolarStep<'a> {
    base: &'a StiefelPoint,
    z: Mat,
    root: SpdSqrt,
    m: Mat,
    m_inv: Mat,
    target: StiefelPoint,
}

impl<'a> PolarStep<'a> {
    fn new(base: &'a StiefelPoint, eta: &Mat) -> Result<Self> {
        let z = base.matrix() + eta;
        let root = SpdSqrt::of_square(&z.tr_mul(&z))?;
        let m = root.sqrt();
        let m_inv = root.inv_sqrt();
        let target = StiefelPoint::new_unchecked(&z * &m_inv);
        Ok(Self { base, z, root, m, m_inv, target })
    }

    pub fn target(&self) -> &StiefelPoint {
        &self.target
    }

    pub fn into_target(self) -> StiefelPoint {
        self.target
    }

    fn check_tangent_shape(&self, v: &Mat) -> Result<()> {
        check_shape(self.base.shape(), v.shape())
    }

    /// `T_eta xi = d/dt R_X(eta + t xi)` at `t = 0`; result is tangent at `Y`.
    pub fn transport(&self, xi: &TangentVector) -> Result<TangentVector> {
        self.check_tangent_shape(xi)?;
        let ztxi = self.z.tr_mul(xi);
        let dm = self.root.solve_sylvester(&(&ztxi + ztxi.transpose()));
        let out = (xi - self.target.matrix() * dm) * &self.m_inv;
        Ok(self.target.proj_tangent_unchecked(&out))
    }

    /// Solves `T_eta xi = zeta` for `xi` tangent at `X`.
    pub fn transport_inverse(&self, zeta: &TangentVector) -> Result<TangentVector> {
        self.check_tangent_shape(zeta)?;
        let x = self.base.matrix();
        let y = self.target.matrix();
        let a = x.tr_mul(y);
        let zm = zeta * &self.m;
        let c = x.tr_mul(&zm);
        let rhs = -(&c + c.transpose());
        let s = solve_lyapunov(&a, &rhs).map_err(transport_failure)?;
        let xi = zm + y * s;
        Ok(self.base.proj_tangent_unchecked(&xi))
    }

    /// Adjoint `T_eta^#` mapping tangent vectors at `Y` back to `X`.
    pub fn transport_adjoint(&self, u: &TangentVector) -> Result<TangentVector> {
        self.check_tangent_shape(u)?;
        let w = &self.m_inv * self.z.tr_mul(u) * &self.m_inv;
        let k = self.root.solve_sylvester(&w);
        let out = u * &self.m_inv - &self.z * (&k + k.transpose());
        Ok(self.base.proj_tangent_unchecked(&out))
    }

    /// Inverse adjoint `T_eta^{-#}` mapping tangent vectors at `X` to `Y`:
    /// `<T^{-#} h, zeta> = <h, T^{-1} zeta>` for every `zeta` tangent at `Y`.
    pub fn transport_inverse_adjoint(&self, h: &TangentVector) -> Result<TangentVector> {
        self.check_tangent_shape(h)?;
        let x = self.base.matrix();
        let y = self.target.matrix();
        let a = x.tr_mul(y);
        let w = sym(&y.tr_mul(h));
        let g = solve_lyapunov(&a.transpose(), &w).map_err(transport_failure)?;
        let out = (h - x * (&g + g.transpose())) * &self.m;
        Ok(self.target.proj_tangent_unchecked(&out))
    }
}

fn transport_failure(e: IrpgError) -> IrpgError {
    match e {
        IrpgError::Singular(msg) => IrpgError::Singular(format!("transport is ill-conditioned: {msg}")),
        other => other,
    }
}
