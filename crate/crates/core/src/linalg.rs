//! Small dense kernels shared by the manifold and solver modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{IrpgError, Result};

pub type Mat = DMatrix<f64>;

/// Frobenius inner product.
#[inline]
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn skew(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

/// Length of the symmetric vectorization of an `s x s` matrix.
#[inline]
pub fn svec_len(s: usize) -> usize {
    s * (s + 1) / 2
}

/// Isometric vectorization of a symmetric matrix.
///
/// Ordering: the diagonal `M11, ..., Mss` first, then `sqrt(2) * Mij` for
/// `i < j` row by row (`12, 13, ..., 1s, 23, ...`). Only the upper triangle is
/// read, so callers symmetrize first when the input is not exactly symmetric.
pub fn svec(m: &Mat) -> DVector<f64> {
    let s = m.nrows();
    let mut out = DVector::zeros(svec_len(s));
    for i in 0..s {
        out[i] = m[(i, i)];
    }
    let mut idx = s;
    for i in 0..s {
        for j in (i + 1)..s {
            out[idx] = std::f64::consts::SQRT_2 * m[(i, j)];
            idx += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn svec_inv(v: &DVector<f64>, s: usize) -> Mat {
    debug_assert_eq!(v.len(), svec_len(s));
    let mut m = Mat::zeros(s, s);
    for i in 0..s {
        m[(i, i)] = v[i];
    }
    let mut idx = s;
    for i in 0..s {
        for j in (i + 1)..s {
            let x = v[idx] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    m
}

/// Column-major vectorization.
pub fn vec(m: &Mat) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

/// Square root of a symmetric positive definite matrix kept in eigen form.
///
/// Holds `M = U diag(d) U^T` with `d > 0` so that `M`, `M^{-1}` and the
/// Sylvester operator `D -> D M + M D` can all be applied without refactoring.
#[derive(Clone, Debug)]
pub struct SpdSqrt {
    vectors: Mat,
    roots: DVector<f64>,
}

impl SpdSqrt {
    /// Factor `S^{1/2}` for symmetric positive definite `S`.
    pub fn of_square(s: &Mat) -> Result<Self> {
        let eig = SymmetricEigen::new(sym(s));
        let scale = eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.iter().any(|&l| !(l > 1e-14 * scale)) {
            return Err(IrpgError::Singular(
                "Gram matrix of the retraction argument is not positive definite".into(),
            ));
        }
        Ok(Self {
            vectors: eig.eigenvectors,
            roots: eig.eigenvalues.map(f64::sqrt),
        })
    }

    fn with_diag(&self, f: impl Fn(f64) -> f64) -> Mat {
        let d = self.roots.map(f);
        let scaled = &self.vectors * Mat::from_diagonal(&d);
        scaled * self.vectors.transpose()
    }

    pub fn sqrt(&self) -> Mat {
        self.with_diag(|r| r)
    }

    pub fn inv_sqrt(&self) -> Mat {
        self.with_diag(|r| 1.0 / r)
    }

    /// Solve `D M + M D = rhs` where `M` is this square root.
    pub fn solve_sylvester(&self, rhs: &Mat) -> Mat {
        let u = &self.vectors;
        let mut t = u.transpose() * rhs * u;
        let p = self.roots.len();
        for j in 0..p {
            for i in 0..p {
                t[(i, j)] /= self.roots[i] + self.roots[j];
            }
        }
        u * t * u.transpose()
    }
}

/// Solve `A S + S A^T = C` for general square `A` through its Kronecker form.
pub fn solve_lyapunov(a: &Mat, c: &Mat) -> Result<Mat> {
    let p = a.nrows();
    let id = Mat::identity(p, p);
    let op = id.kronecker(a) + a.kronecker(&id);
    let lu = op.lu();
    let sol = lu
        .solve(&vec(c))
        .ok_or_else(|| IrpgError::Singular("Lyapunov operator is singular".into()))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(IrpgError::Singular("Lyapunov solve produced non-finite values".into()));
    }
    Ok(unvec(&sol, p, p))
}

/// Orthogonal complement of an orthonormal `n x p` block, held as Householder
/// reflectors of its full QR factorization.
///
/// `apply` maps `(n - p) x k` coefficients to `X_perp * K` and `adjoint`
/// computes `X_perp^T Z`; the `n x (n - p)` basis itself is never formed.
#[derive(Clone, Debug)]
pub struct OrthoComplement {
    n: usize,
    p: usize,
    // reflector j acts on rows j..n
    reflectors: Vec<DVector<f64>>,
}

impl OrthoComplement {
    pub fn new(x: &Mat) -> Result<Self> {
        let (n, p) = x.shape();
        if p > n {
            return Err(IrpgError::InvalidPoint(format!("{n}x{p} block has more columns than rows")));
        }
        let mut a = x.clone();
        let mut reflectors = Vec::with_capacity(p);
        for j in 0..p {
            let col = a.view((j, j), (n - j, 1)).column(0).clone_owned();
            let norm = col.norm();
            if norm <= 1e-12 {
                return Err(IrpgError::InvalidPoint("rank-deficient basis".into()));
            }
            let alpha = if col[0] >= 0.0 { -norm } else { norm };
            let mut v = col;
            v[0] -= alpha;
            let vn = v.norm();
            v /= vn;
            let mut block = a.view_mut((j, j), (n - j, p - j));
            let w = block.tr_mul(&v);
            block -= &v * w.transpose() * 2.0;
            reflectors.push(v);
        }
        Ok(Self { n, p, reflectors })
    }

    /// Number of complement columns.
    pub fn dim(&self) -> usize {
        self.n - self.p
    }

    fn reflect(&self, j: usize, z: &mut Mat) {
        let v = &self.reflectors[j];
        let cols = z.ncols();
        let mut block = z.view_mut((j, 0), (self.n - j, cols));
        let w = block.tr_mul(v);
        block -= v * w.transpose() * 2.0;
    }

    /// `X_perp * k` for `k` of shape `(n - p) x cols`.
    pub fn apply(&self, k: &Mat) -> Mat {
        debug_assert_eq!(k.nrows(), self.dim());
        let mut z = Mat::zeros(self.n, k.ncols());
        z.view_mut((self.p, 0), (self.dim(), k.ncols())).copy_from(k);
        for j in (0..self.p).rev() {
            self.reflect(j, &mut z);
        }
        z
    }

    /// `X_perp^T * z` for `z` of shape `n x cols`.
    pub fn adjoint(&self, z: &Mat) -> Mat {
        debug_assert_eq!(z.nrows(), self.n);
        let mut w = z.clone();
        for j in 0..self.p {
            self.reflect(j, &mut w);
        }
        w.rows(self.p, self.dim()).into_owned()
    }
}

/// Largest singular value via a symmetric eigen solve on the smaller Gram matrix.
pub fn spectral_norm(a: &Mat) -> f64 {
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let ev = SymmetricEigen::new(gram).eigenvalues;
    ev.max().max(0.0).sqrt()
}

/// Conjugate gradients for a symmetric positive definite operator.
pub fn conjugate_gradient(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    rhs: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> DVector<f64> {
    let mut x = DVector::zeros(rhs.len());
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    let stop = tol * tol * rhs.norm_squared();
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let ad = apply(&d);
        let curv = d.dot(&ad);
        if curv <= 0.0 {
            break;
        }
        let step = rr / curv;
        x.axpy(step, &d, 1.0);
        r.axpy(-step, &ad, 1.0);
        let rr_next = r.norm_squared();
        d = &r + &d * (rr_next / rr);
        rr = rr_next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(n: usize, p: usize, seed: u64) -> Mat {
        // deterministic, well-conditioned, no RNG dependency
        Mat::from_fn(n, p, |i, j| {
            let t = (i * 31 + j * 17 + seed as usize * 7) as f64;
            (t * 0.37).sin() + if i == j { 2.0 } else { 0.0 }
        })
    }

    #[test]
    fn svec_is_isometric_and_invertible() {
        let s = sym(&sample(4, 4, 1));
        let v = svec(&s);
        assert_relative_eq!(v.norm(), s.norm(), epsilon = 1e-13);
        assert_relative_eq!(svec_inv(&v, 4), s, epsilon = 1e-14);
    }

    #[test]
    fn svec_diagonal_ordering() {
        let s = Mat::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_eq!(svec(&s).as_slice(), &[2.0, 3.0, 0.0]);
    }

    #[test]
    fn sylvester_solution_satisfies_equation() {
        let b = sample(3, 3, 2);
        let s = b.transpose() * &b + Mat::identity(3, 3);
        let root = SpdSqrt::of_square(&s).unwrap();
        let m = root.sqrt();
        assert_relative_eq!(&m * &m, s, epsilon = 1e-11);
        let rhs = sample(3, 3, 5);
        let d = root.solve_sylvester(&rhs);
        assert_relative_eq!(&d * &m + &m * &d, rhs, epsilon = 1e-11);
        assert_relative_eq!(root.inv_sqrt() * &m, Mat::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = sample(3, 3, 4) + Mat::identity(3, 3) * 3.0;
        let c = sample(3, 3, 9);
        let s = solve_lyapunov(&a, &c).unwrap();
        assert_relative_eq!(&a * &s + &s * a.transpose(), c, epsilon = 1e-11);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let q = sample(7, 3, 3).qr().q();
        let comp = OrthoComplement::new(&q).unwrap();
        let basis = comp.apply(&Mat::identity(4, 4));
        assert_relative_eq!(basis.transpose() * &basis, Mat::identity(4, 4), epsilon = 1e-13);
        assert!((q.transpose() * &basis).norm() < 1e-13);
        let z = sample(7, 2, 8);
        assert_relative_eq!(comp.adjoint(&z), basis.transpose() * z, epsilon = 1e-13);
    }

    #[test]
    fn complement_rejects_rank_deficiency() {
        let x = Mat::zeros(4, 2);
        assert!(OrthoComplement::new(&x).is_err());
    }

    #[test]
    fn cg_solves_spd_system() {
        let b = sample(5, 5, 11);
        let a = b.transpose() * &b + Mat::identity(5, 5);
        let rhs = DVector::from_fn(5, |i, _| i as f64 - 1.5);
        let x = conjugate_gradient(|d| &a * d, &rhs, 1e-14, 100);
        assert_relative_eq!(&a * x, rhs, epsilon = 1e-10);
    }
}
