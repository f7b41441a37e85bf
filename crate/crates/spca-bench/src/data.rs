//! Synthetic data and initial points.
//!
//! Entries are drawn from `ChaCha20Rng::seed_from_u64(seed)`. Each pair of
//! uniforms `(u1, u2)` taken as `1 - random::<f64>()` and `random::<f64>()`
//! gives the two Box-Muller variates `r cos(2 pi u2)`, `r sin(2 pi u2)` with
//! `r = sqrt(-2 ln u1)`. The matrix is filled in row-major order, then every
//! column is shifted to mean zero and scaled to unit sample standard
//! deviation (divisor `m - 1`).

use irpg_core::linalg::{spectral_norm, OrthoComplement};
use irpg_core::manifold::StiefelPoint;
use irpg_core::{IrpgError, Mat, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::f64::consts::PI;

/// Standard normal variates by Box-Muller, in generation order.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Standardized `m x n` Gaussian data matrix.
pub fn gen_data(m: usize, n: usize, seed: u64) -> Result<Mat> {
    if m < 2 {
        return Err(IrpgError::InvalidParameter(format!("need at least 2 rows to standardize, got {m}")));
    }
    if n == 0 {
        return Err(IrpgError::InvalidParameter("need at least one column".into()));
    }
    let mut stream = NormalStream::new(seed);
    let mut a = Mat::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = stream.next_normal();
        }
    }
    standardize_columns(&mut a);
    Ok(a)
}

fn standardize_columns(a: &mut Mat) {
    let m = a.nrows() as f64;
    for mut col in a.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
        let var = col.norm_squared() / (m - 1.0);
        if var > 0.0 {
            col /= var.sqrt();
        }
        // second pass removes the rounding left in the mean
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
}

/// Leading `p` right singular vectors of `a`. When `p` exceeds the rank the
/// remaining columns are an orthonormal completion.
pub fn init_point(a: &Mat, p: usize) -> Result<StiefelPoint> {
    let n = a.ncols();
    if p == 0 || p > n {
        return Err(IrpgError::InvalidParameter(format!("need 1 <= p <= n = {n}, got p = {p}")));
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| IrpgError::Singular("SVD did not return right vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let k = p.min(order.len());
    let mut x = Mat::zeros(n, p);
    for (col, &i) in order.iter().take(k).enumerate() {
        x.set_column(col, &v_t.row(i).transpose());
    }
    if k < p {
        let head = x.columns(0, k).into_owned();
        let complement = OrthoComplement::new(&head)?;
        let pick = Mat::identity(n - k, p - k);
        x.columns_mut(k, p - k).copy_from(&complement.apply(&pick));
    }
    StiefelPoint::from_polar(x)
}

/// `2 sigma_max(a)^2`, the initial proximal parameter.
pub fn default_l0(a: &Mat) -> f64 {
    let s = spectral_norm(a);
    2.0 * s * s
}
