//! Orthonormal normal-space bases `B_x` and their adjoints for embedded
//! manifolds other than Stiefel.
//!
//! Only the operators are provided here; the solver pipeline is Stiefel-only.
//! Orthogonal complements (`U_perp`, `V_perp`, `H_perp`) are applied through
//! Householder reflectors and never materialized.

use nalgebra::DVector;

use crate::error::{check_shape, IrpgError, Result};
use crate::linalg::{svec, svec_inv, svec_len, sym, unvec, vec, Mat, OrthoComplement};
use crate::manifold::stiefel::{NormalCoords, StiefelPoint};

/// Linear isometry from normal coordinates onto the normal (or, for quotient
/// manifolds, the non-horizontal) space at a point, plus its adjoint.
pub trait NormalBasis {
    type Ambient;

    fn normal_dim(&self) -> usize;

    /// `B_x^T z`.
    fn normal_adjoint(&self, z: &Self::Ambient) -> Result<NormalCoords>;

    /// `B_x v`.
    fn normal_apply(&self, v: &NormalCoords) -> Result<Self::Ambient>;

    /// Orthogonal projection onto the tangent (horizontal) space, `z - B_x B_x^T z`.
    fn project_tangent(&self, z: &Self::Ambient) -> Result<Self::Ambient>;
}

fn check_len(expected: usize, v: &NormalCoords) -> Result<()> {
    if v.0.len() == expected {
        Ok(())
    } else {
        Err(IrpgError::LengthMismatch { expected, got: v.0.len() })
    }
}

fn orthonormal_or_err(m: &Mat, what: &str) -> Result<()> {
    let k = m.ncols();
    if k > m.nrows() || (m.tr_mul(m) - Mat::identity(k, k)).norm() > 1e-10 {
        return Err(IrpgError::InvalidPoint(format!("{what} does not have orthonormal columns")));
    }
    Ok(())
}

impl NormalBasis for StiefelPoint {
    type Ambient = Mat;

    fn normal_dim(&self) -> usize {
        StiefelPoint::normal_dim(self)
    }

    fn normal_adjoint(&self, z: &Mat) -> Result<NormalCoords> {
        StiefelPoint::normal_adjoint(self, z)
    }

    fn normal_apply(&self, v: &NormalCoords) -> Result<Mat> {
        StiefelPoint::normal_apply(self, v)
    }

    fn project_tangent(&self, z: &Mat) -> Result<Mat> {
        self.proj_tangent(z)
    }
}

/// Grassmann manifold represented by orthonormal `n x p` bases; the normal
/// directions are the complement `{X M}` of the horizontal space.
#[derive(Clone, Debug)]
pub struct GrassmannPoint {
    x: Mat,
}

impl GrassmannPoint {
    pub fn new(x: Mat) -> Result<Self> {
        orthonormal_or_err(&x, "Grassmann representative")?;
        Ok(Self { x })
    }
}

impl NormalBasis for GrassmannPoint {
    type Ambient = Mat;

    fn normal_dim(&self) -> usize {
        self.x.ncols() * self.x.ncols()
    }

    fn normal_adjoint(&self, z: &Mat) -> Result<NormalCoords> {
        check_shape(self.x.shape(), z.shape())?;
        Ok(NormalCoords(vec(&self.x.tr_mul(z))))
    }

    fn normal_apply(&self, v: &NormalCoords) -> Result<Mat> {
        check_len(self.normal_dim(), v)?;
        let p = self.x.ncols();
        Ok(&self.x * unvec(&v.0, p, p))
    }

    fn project_tangent(&self, z: &Mat) -> Result<Mat> {
        check_shape(self.x.shape(), z.shape())?;
        Ok(z - &self.x * self.x.tr_mul(z))
    }
}

/// Fixed-rank matrices `X = U diag(s) V^T` of size `m x n` and rank `r`; the
/// normal space is `{ U_perp K V_perp^T }`.
#[derive(Clone, Debug)]
pub struct FixedRankPoint {
    u: Mat,
    s: DVector<f64>,
    v: Mat,
    u_perp: OrthoComplement,
    v_perp: OrthoComplement,
}

impl FixedRankPoint {
    /// From a thin SVD `U diag(s) V^T` with strictly positive `s`.
    pub fn new(u: Mat, s: DVector<f64>, v: Mat) -> Result<Self> {
        orthonormal_or_err(&u, "U")?;
        orthonormal_or_err(&v, "V")?;
        if u.ncols() != s.len() || v.ncols() != s.len() || s.iter().any(|&x| !(x > 0.0)) {
            return Err(IrpgError::InvalidPoint("singular values must be positive and match the rank".into()));
        }
        let u_perp = OrthoComplement::new(&u)?;
        let v_perp = OrthoComplement::new(&v)?;
        Ok(Self { u, s, v, u_perp, v_perp })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn matrix(&self) -> Mat {
        &self.u * Mat::from_diagonal(&self.s) * self.v.transpose()
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }
}

impl NormalBasis for FixedRankPoint {
    type Ambient = Mat;

    fn normal_dim(&self) -> usize {
        self.u_perp.dim() * self.v_perp.dim()
    }

    fn normal_adjoint(&self, z: &Mat) -> Result<NormalCoords> {
        check_shape(self.shape(), z.shape())?;
        // U_perp^T Z V_perp = (V_perp^T (U_perp^T Z)^T)^T
        let left = self.u_perp.adjoint(z);
        let k = self.v_perp.adjoint(&left.transpose()).transpose();
        Ok(NormalCoords(vec(&k)))
    }

    fn normal_apply(&self, v: &NormalCoords) -> Result<Mat> {
        check_len(self.normal_dim(), v)?;
        let k = unvec(&v.0, self.u_perp.dim(), self.v_perp.dim());
        let left = self.u_perp.apply(&k);
        Ok(self.v_perp.apply(&left.transpose()).transpose())
    }

    fn project_tangent(&self, z: &Mat) -> Result<Mat> {
        let b = self.normal_apply(&self.normal_adjoint(z)?)?;
        Ok(z - b)
    }
}

/// Symmetric positive semidefinite `n x n` matrices of rank `r`, `X = H H^T`,
/// embedded in the symmetric matrices. Normal space `{ H_perp S H_perp^T }`.
#[derive(Clone, Debug)]
pub struct PsdFixedRankPoint {
    h: Mat,
    h_perp: OrthoComplement,
}

impl PsdFixedRankPoint {
    /// `h` is any full-column-rank `n x r` factor.
    pub fn new(h: Mat) -> Result<Self> {
        let h_perp = OrthoComplement::new(&h.clone().qr().q())?;
        Ok(Self { h, h_perp })
    }

    pub fn factor(&self) -> &Mat {
        &self.h
    }

    pub fn size(&self) -> usize {
        self.h.nrows()
    }
}

impl NormalBasis for PsdFixedRankPoint {
    type Ambient = Mat;

    fn normal_dim(&self) -> usize {
        svec_len(self.h_perp.dim())
    }

    fn normal_adjoint(&self, z: &Mat) -> Result<NormalCoords> {
        let n = self.size();
        check_shape((n, n), z.shape())?;
        let zs = sym(z);
        let left = self.h_perp.adjoint(&zs);
        let core = self.h_perp.adjoint(&left.transpose());
        Ok(NormalCoords(svec(&sym(&core))))
    }

    fn normal_apply(&self, v: &NormalCoords) -> Result<Mat> {
        check_len(self.normal_dim(), v)?;
        let s = svec_inv(&v.0, self.h_perp.dim());
        let left = self.h_perp.apply(&s);
        Ok(self.h_perp.apply(&left.transpose()))
    }

    fn project_tangent(&self, z: &Mat) -> Result<Mat> {
        let b = self.normal_apply(&self.normal_adjoint(z)?)?;
        Ok(sym(z) - b)
    }
}

/// Product manifold: `B_x` acts blockwise and coordinates are concatenated.
pub struct ProductPoint {
    factors: Vec<Box<dyn NormalBasis<Ambient = Mat> + Send + Sync>>,
}

impl ProductPoint {
    pub fn new(factors: Vec<Box<dyn NormalBasis<Ambient = Mat> + Send + Sync>>) -> Self {
        Self { factors }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

impl NormalBasis for ProductPoint {
    type Ambient = Vec<Mat>;

    fn normal_dim(&self) -> usize {
        self.factors.iter().map(|f| f.normal_dim()).sum()
    }

    fn normal_adjoint(&self, z: &Vec<Mat>) -> Result<NormalCoords> {
        if z.len() != self.factors.len() {
            return Err(IrpgError::LengthMismatch { expected: self.factors.len(), got: z.len() });
        }
        let mut out = Vec::with_capacity(self.normal_dim());
        for (f, zi) in self.factors.iter().zip(z) {
            out.extend_from_slice(f.normal_adjoint(zi)?.0.as_slice());
        }
        Ok(NormalCoords(DVector::from_vec(out)))
    }

    fn normal_apply(&self, v: &NormalCoords) -> Result<Vec<Mat>> {
        check_len(self.normal_dim(), v)?;
        let mut offset = 0;
        self.factors
            .iter()
            .map(|f| {
                let k = f.normal_dim();
                let part = NormalCoords(v.0.rows(offset, k).into_owned());
                offset += k;
                f.normal_apply(&part)
            })
            .collect()
    }

    fn project_tangent(&self, z: &Vec<Mat>) -> Result<Vec<Mat>> {
        if z.len() != self.factors.len() {
            return Err(IrpgError::LengthMismatch { expected: self.factors.len(), got: z.len() });
        }
        self.factors.iter().zip(z).map(|(f, zi)| f.project_tangent(zi)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
        Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orth(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
        gauss(rng, n, p).qr().q()
    }

    fn coords(rng: &mut ChaCha8Rng, k: usize) -> NormalCoords {
        NormalCoords(DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)))
    }

    /// B^T B = I, ||B v|| = ||v||, B^T kills tangents, and B^T annihilates
    /// the projected tangent component.
    fn check_basis<B: NormalBasis<Ambient = Mat>>(b: &B, tangent: &Mat, ambient: &Mat, rng: &mut ChaCha8Rng) {
        for _ in 0..5 {
            let v = coords(rng, b.normal_dim());
            let bv = b.normal_apply(&v).unwrap();
            assert_relative_eq!(bv.norm(), v.norm(), epsilon = 1e-12);
            assert_relative_eq!(b.normal_adjoint(&bv).unwrap().0, v.0.clone(), epsilon = 1e-12);
            assert!(inner(&bv, tangent).abs() < 1e-12);
        }
        assert!(b.normal_adjoint(tangent).unwrap().norm() < 1e-12);
        let pt = b.project_tangent(ambient).unwrap();
        assert!(b.normal_adjoint(&pt).unwrap().norm() < 1e-12);
        let zero = b.normal_apply(&NormalCoords::zeros(b.normal_dim())).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn grassmann_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = orth(&mut rng, 7, 3);
        let g = GrassmannPoint::new(x.clone()).unwrap();
        assert_eq!(g.normal_dim(), 9);
        let m = gauss(&mut rng, 3, 3);
        assert_relative_eq!(g.normal_adjoint(&(&x * &m)).unwrap().0, vec(&m), epsilon = 1e-13);
        let z = gauss(&mut rng, 7, 3);
        let horizontal = &z - &x * x.tr_mul(&z);
        check_basis(&g, &horizontal, &z, &mut rng);
    }

    #[test]
    fn fixed_rank_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (m, n, r) = (6, 5, 2);
        let u = orth(&mut rng, m, r);
        let v = orth(&mut rng, n, r);
        let x = FixedRankPoint::new(u.clone(), DVector::from_vec(vec![3.0, 1.5]), v.clone()).unwrap();
        assert_eq!(x.normal_dim(), (m - r) * (n - r));
        // tangent: U M V^T + U_p V^T + U V_p^T with U^T U_p = 0, V^T V_p = 0
        let up = {
            let z = gauss(&mut rng, m, r);
            &z - &u * u.tr_mul(&z)
        };
        let vp = {
            let z = gauss(&mut rng, n, r);
            &z - &v * v.tr_mul(&z)
        };
        let tangent = &u * gauss(&mut rng, r, r) * v.transpose() + up * v.transpose() + &u * vp.transpose();
        check_basis(&x, &tangent, &gauss(&mut rng, m, n), &mut rng);
        assert_relative_eq!(x.matrix().rank(1e-10) as f64, 2.0);
    }

    #[test]
    fn fixed_rank_rejects_bad_factors() {
        let u = Mat::identity(4, 2);
        let v = Mat::identity(3, 2);
        assert!(FixedRankPoint::new(u.clone(), DVector::from_vec(vec![1.0, 0.0]), v.clone()).is_err());
        assert!(FixedRankPoint::new(u * 2.0, DVector::from_vec(vec![1.0, 1.0]), v).is_err());
    }

    #[test]
    fn psd_fixed_rank_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (n, r) = (6, 2);
        let h = gauss(&mut rng, n, r);
        let x = PsdFixedRankPoint::new(h.clone()).unwrap();
        assert_eq!(x.normal_dim(), (n - r) * (n - r + 1) / 2);
        let k = gauss(&mut rng, n, r);
        let tangent = &h * k.transpose() + &k * h.transpose();
        check_basis(&x, &tangent, &sym(&gauss(&mut rng, n, n)), &mut rng);
    }

    #[test]
    fn product_concatenates_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let st = StiefelPoint::new(orth(&mut rng, 5, 2)).unwrap();
        let gr = GrassmannPoint::new(orth(&mut rng, 4, 1)).unwrap();
        let st_dim = NormalBasis::normal_dim(&st);
        let prod = ProductPoint::new(vec![Box::new(st.clone()), Box::new(gr.clone())]);
        assert_eq!(prod.normal_dim(), 3 + 1);
        let v = coords(&mut rng, 4);
        let parts = prod.normal_apply(&v).unwrap();
        let first = NormalBasis::normal_apply(&st, &NormalCoords(v.0.rows(0, st_dim).into_owned())).unwrap();
        assert_relative_eq!(parts[0], first, epsilon = 1e-14);
        assert_relative_eq!(prod.normal_adjoint(&parts).unwrap().0, v.0, epsilon = 1e-12);
        let z = vec![gauss(&mut rng, 5, 2), gauss(&mut rng, 4, 1)];
        let t = prod.project_tangent(&z).unwrap();
        assert!(prod.normal_adjoint(&t).unwrap().norm() < 1e-12);
        assert!(prod.normal_adjoint(&z[..1].to_vec()).is_err());
    }
}
