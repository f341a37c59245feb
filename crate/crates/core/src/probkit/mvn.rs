use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws from `N(mean, cov)` through the Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidParameter(format!(
            "covariance is {}x{}, mean has length {d}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{d}x{d} covariance")))?;
    let z = standard_normals(d, rng);
    Ok(mean + chol.l() * z)
}

/// Draws from `N(Q⁻¹ b, Q⁻¹)` given the precision `Q` and the linear term `b`.
///
/// Conjugate Gaussian updates arrive in this canonical form; it avoids forming
/// the covariance explicitly.
pub fn sample_mvn_canonical<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = linear.len();
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{d}x{d} posterior precision")))?;
    let mean = chol.solve(linear);
    let z = standard_normals(d, rng);
    // L Lᵀ = Q, so Lᵀ x = z gives x with covariance Q⁻¹
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite("triangular solve".into()))?;
    Ok(mean + x)
}
