use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result};

/// Principal axes of a centered data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `[k, D]`, orthonormal rows ordered by decreasing variance.
    pub components: DMatrix<f64>,
    /// Sample variance (`N - 1` normalization) along each component.
    pub explained_variance: DVector<f64>,
}

fn centered(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Eigenpairs sorted by decreasing eigenvalue, ties by original index.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

/// Top-`k` principal components of `x: [N, D]`.
///
/// Solves whichever of the `D×D` covariance or `N×N` Gram eigenproblems is
/// smaller. Each component is re-orthogonalized against the previous ones
/// and its sign fixed so the largest-magnitude coordinate is positive.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(invalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    let kmax = (n - 1).min(d);
    if k == 0 || k > kmax {
        return Err(invalid(format!("k = {k} outside 1..={kmax}")));
    }
    let mean = x.row_mean().transpose();
    let xc = centered(x, &mean);
    let denom = n as f64 - 1.0;

    let mut axes: Vec<DVector<f64>> = Vec::with_capacity(k);
    if d <= n {
        let (_, vecs) = sorted_eigen(xc.transpose() * &xc / denom);
        axes.extend((0..k).map(|i| vecs.column(i).into_owned()));
    } else {
        let (vals, vecs) = sorted_eigen(&xc * xc.transpose());
        for i in 0..k {
            let v = xc.transpose() * vecs.column(i);
            let norm = vals[i].max(0.0).sqrt();
            axes.push(if norm > 0.0 { v / norm } else { v });
        }
    }
    for i in 0..axes.len() {
        for j in 0..i {
            let p = axes[j].dot(&axes[i]);
            let prev = axes[j].clone();
            axes[i] -= prev * p;
        }
        let norm = axes[i].norm();
        if norm == 0.0 {
            return Err(invalid("data has fewer non-degenerate directions than k"));
        }
        axes[i] /= norm;
        let (mut best, mut sign) = (0.0, 1.0);
        for &v in axes[i].iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        axes[i] *= sign;
    }
    let components = DMatrix::from_rows(&axes.iter().map(|a| a.transpose()).collect::<Vec<_>>());
    let proj = &xc * components.transpose();
    let explained_variance = DVector::from_iterator(k, proj.column_iter().map(|c| c.norm_squared() / denom));
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x − mean) · componentsᵀ`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(invalid(format!("expected {} features, got {}", self.dim(), x.ncols())));
        }
        Ok(centered(x, &self.mean) * self.components.transpose())
    }

    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.k() {
            return Err(invalid(format!("expected {} components, got {}", self.k(), z.ncols())));
        }
        let mut x = z * &self.components;
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(x)
    }

    /// Fraction of total variance captured by each component.
    pub fn explained_variance_ratio(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let xc = centered(x, &self.mean);
        let total = xc.norm_squared() / (x.nrows() as f64 - 1.0);
        Ok(&self.explained_variance / total)
    }
}

pub fn pca_transform(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.transform(x)
}
