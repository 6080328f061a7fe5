//! Small shared helpers on top of nalgebra's symmetric eigensolver.

use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending
/// and eigenvector columns permuted to match.
pub(crate) fn symmetric_eigen_ascending(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (eigenvalues, eigenvectors)
}

/// Relative asymmetry ||M - M^T||_F / ||M||_F (zero for the zero matrix).
pub(crate) fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

/// Reconstruct P * diag(d) * P^T.
pub(crate) fn from_spectrum(eigenvalues: &DVector<f64>, eigenvectors: &DMatrix<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(eigenvectors.nrows(), eigenvectors.ncols(), |r, c| {
        eigenvectors[(r, c)] * eigenvalues[c]
    });
    scaled * eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (vals, vecs) = symmetric_eigen_ascending(&m);
        for i in 1..3 {
            assert!(vals[i] >= vals[i - 1]);
        }
        let rec = from_spectrum(&vals, &vecs);
        assert_relative_eq!(rec, m, epsilon = 1e-12);
        let identity = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(vecs.transpose() * &vecs, identity, epsilon = 1e-12);
    }
}
