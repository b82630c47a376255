//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part of `a`, eigenvalues ascending.
///
/// Column `j` of the returned matrix is the unit eigenvector for eigenvalue `j`.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let dim = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ascending eigenvalues of the symmetric part of `a`.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut values: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    DVector::from_vec(values)
}

/// Symmetric inverse square root `V diag(λ^{-1/2}) Vᵀ` of an SPD matrix.
pub fn inverse_sqrt_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_eigen(a);
    if values.is_empty() || values[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue {:e}",
            values.get(0).copied().unwrap_or(f64::NAN)
        )));
    }
    let scale = DMatrix::from_diagonal(&values.map(|v| v.sqrt().recip()));
    Ok(symmetrize(&(&vectors * scale * vectors.transpose())))
}

/// A factor `F` with `F Fᵀ = a` for a PSD matrix; Cholesky when possible,
/// otherwise the symmetric square root with negative eigenvalues clipped.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(a);
    if let Some(chol) = sym.clone().cholesky() {
        return chol.l();
    }
    let (values, vectors) = sorted_eigen(&sym);
    let root = DMatrix::from_diagonal(&values.map(|v| v.max(0.0).sqrt()));
    &vectors * root * vectors.transpose()
}

/// Population covariance (divisor `K`) of the rows of a `K×G` matrix.
pub fn population_covariance(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let k = rows.nrows() as f64;
    let mean = rows.row_mean();
    let mut centered = rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    symmetrize(&(centered.transpose() * &centered / k))
}

/// Largest absolute elementwise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
