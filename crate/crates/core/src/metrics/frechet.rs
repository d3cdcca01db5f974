use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Symmetry tolerance for PSD inputs.
pub const SYMMETRY_TOL: f64 = 1e-6;
/// Eigenvalues below `-PSD_TOL` reject the matrix; other negative ones are
/// rounding and clamp to zero.
pub const PSD_TOL: f64 = 1e-6;

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(invalid(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(invalid(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    Ok(())
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Small negative eigenvalues clamp to zero; anything below `-1e-6` is
/// rejected. The result is exactly symmetric.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -PSD_TOL {
            return Err(Error::Numerical(format!("matrix is not positive semi-definite (eigenvalue {l:e})")));
        }
        roots[i] = l.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let r = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianSummary {
    /// Fit from `[N, D]` rows with the unbiased `N - 1` covariance.
    ///
    /// Rows are put in lexicographic order first, so the summary does not
    /// depend on sample order down to the last bit.
    pub fn fit(features: &DMatrix<f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(invalid(format!("need at least 2 samples, got {n}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            features
                .row(a)
                .iter()
                .zip(features.row(b).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let sorted = features.select_rows(&order);
        let mean = sorted.row_mean().transpose();
        let mut centered = sorted;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let covariance = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Squared Fréchet distance between two Gaussians:
/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2 (√Σ₁ Σ₂ √Σ₁)^{1/2})`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() || a.covariance.nrows() != a.dim() || b.covariance.nrows() != b.dim() {
        return Err(invalid(format!("feature dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let s1 = matrix_sqrt_psd(&a.covariance)?;
    check_symmetric(&b.covariance)?;
    let inner = &s1 * &b.covariance * &s1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = matrix_sqrt_psd(&inner)?;
    let dmu = (&a.mean - &b.mean).norm_squared();
    let d2 = dmu + a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
    let tol = 1e-6 * (1.0 + a.covariance.trace().abs() + b.covariance.trace().abs());
    if d2 < -tol {
        return Err(Error::Numerical(format!("negative squared distance {d2:e}")));
    }
    Ok(d2.max(0.0))
}
