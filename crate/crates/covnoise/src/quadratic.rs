//! Convex-quadratic testbed: loss/gradient evaluation, spectral data, and the
//! decaying-step-size convergence bound for perturbed gradient descent.
//!
//! The loss is L(theta) = 1/2 theta^T A theta for a symmetric positive-definite
//! A. Running theta_{k+1} = theta_k - alpha_k A theta_k + alpha_k C xi_k with
//! alpha_k = 2 / ((k + gamma) lambda_min) admits the bound
//! E[L(theta_k)] <= nu / (k + gamma) with
//! nu = max(2 Tr(C^T A C) / lambda_min^2, gamma L(theta_0)).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative asymmetry above which construction fails instead of symmetrizing.
const ASYMMETRY_TOL: f64 = 1e-8;
/// Eigenvalues at or below this are treated as non-positive-definite.
const PD_TOL: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending,
/// eigenvector columns orthonormal and matched to the eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    /// Eigenvalues sorted ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthogonal matrix whose columns are the eigenvectors.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// The quadratic problem L(theta) = 1/2 theta^T A theta with cached spectrum.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    dim: usize,
    a: DMatrix<f64>,
    spectrum: SpectralDecomposition,
}

impl QuadraticProblem {
    /// Build a problem from a square matrix. The input is symmetrized via
    /// (A + A^T)/2 before validation; asymmetry beyond 1e-8 relative and
    /// non-positive eigenvalues are rejected.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let asymmetry = linalg::relative_asymmetry(&a);
        if asymmetry > ASYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let sym = (&a + a.transpose()) * 0.5;
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen_ascending(&sym);
        if eigenvalues[0] <= PD_TOL {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: eigenvalues[0],
            });
        }
        Ok(Self {
            dim: sym.nrows(),
            a: sym,
            spectrum: SpectralDecomposition {
                eigenvalues,
                eigenvectors,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn lambda_min(&self) -> f64 {
        self.spectrum.lambda_min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.lambda_max()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    /// L(theta) = 1/2 theta^T A theta.
    pub fn loss(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta.len())?;
        Ok(0.5 * theta.dot(&(&self.a * theta)))
    }

    /// grad L(theta) = A theta.
    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta.len())?;
        Ok(&self.a * theta)
    }

    /// Tr(C^T A C), the quantity that separates noise structures in the
    /// convergence bound. Equals ||A||_F^2 for C = sqrt(A) and
    /// ||diag A||_F^2 for C = sqrt(diag A).
    pub fn trace_ctac(&self, c: &DMatrix<f64>) -> Result<f64> {
        self.check_dim(c.nrows())?;
        self.check_dim(c.ncols())?;
        let ac = &self.a * c;
        Ok(c.iter().zip(ac.iter()).map(|(x, y)| x * y).sum())
    }

    /// The bound nu / (k + gamma) on E[L(theta_k)] under the decaying
    /// schedule, with nu = max(2 Tr(C^T A C) / lambda_min^2, gamma L(theta0)).
    ///
    /// Fails with `InvalidGamma` when no alpha0 <= 1/lambda_max satisfies the
    /// schedule invariant, i.e. when gamma < 2 lambda_max / lambda_min - 1.
    pub fn theorem_bound(
        &self,
        c: &DMatrix<f64>,
        theta0: &DVector<f64>,
        gamma: f64,
        k: u64,
    ) -> Result<f64> {
        let required = 2.0 * self.lambda_max() / self.lambda_min() - 1.0;
        if !(gamma > 0.0) || gamma < required {
            return Err(Error::InvalidGamma { gamma, required });
        }
        let trace = self.trace_ctac(c)?;
        let l0 = self.loss(theta0)?;
        let nu = (2.0 * trace / (self.lambda_min() * self.lambda_min())).max(gamma * l0);
        Ok(nu / (k as f64 + gamma))
    }
}

/// alpha_k = 2 / ((k + gamma) lambda_min) for k >= 1.
pub fn theorem_step_size(k: u64, gamma: f64, lambda_min: f64) -> f64 {
    debug_assert!(k >= 1 && gamma > 0.0 && lambda_min > 0.0);
    2.0 / ((k as f64 + gamma) * lambda_min)
}

/// Smallest integer gamma (at least 1) with alpha_k <= alpha0 for all k >= 1.
pub fn gamma_for_alpha0(alpha0: f64, lambda_min: f64) -> f64 {
    (2.0 / (alpha0 * lambda_min) - 1.0).ceil().max(1.0)
}

/// Step-size schedule for the descent loop; `alpha(k)` is the step used in
/// the k-th update (k starting at 1).
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant { alpha: f64 },
    TheoremDecay { gamma: f64, lambda_min: f64 },
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidStepSize(alpha));
        }
        Ok(Self::Constant { alpha })
    }

    /// Decaying schedule with gamma given directly. The invariant
    /// alpha_k <= alpha0 for all k >= 1 is equivalent to
    /// gamma >= 2/(alpha0 lambda_min) - 1.
    pub fn theorem_decay(gamma: f64, lambda_min: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(lambda_min > 0.0) {
            return Err(Error::InvalidGamma {
                gamma,
                required: f64::EPSILON,
            });
        }
        Ok(Self::TheoremDecay { gamma, lambda_min })
    }

    /// Decaying schedule with gamma derived from an initial step cap alpha0.
    pub fn theorem_decay_from_alpha0(alpha0: f64, lambda_min: f64) -> Result<Self> {
        if !(alpha0 > 0.0) || !(lambda_min > 0.0) {
            return Err(Error::InvalidStepSize(alpha0));
        }
        Self::theorem_decay(gamma_for_alpha0(alpha0, lambda_min), lambda_min)
    }

    /// Step size for update k (k >= 1).
    pub fn alpha(&self, k: u64) -> f64 {
        match self {
            Self::Constant { alpha } => *alpha,
            Self::TheoremDecay { gamma, lambda_min } => theorem_step_size(k, *gamma, *lambda_min),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Self::Constant { .. } => None,
            Self::TheoremDecay { gamma, .. } => Some(*gamma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::covariance;
    use crate::harness::data::random_pd_matrix;
    use crate::Rng;

    fn two_one() -> QuadraticProblem {
        QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap()
    }

    #[test]
    fn identity_problem() {
        let p = QuadraticProblem::new(DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(p.lambda_min(), 1.0);
        assert_relative_eq!(p.lambda_max(), 1.0);
    }

    #[test]
    fn eigenvalues_of_two_one_matrix() {
        // characteristic polynomial lambda^2 - 4 lambda + 3 = 0
        let p = two_one();
        assert_relative_eq!(p.lambda_min(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.lambda_max(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        // eigenvalues 3 and -1
        let err = QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let err = QuadraticProblem::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
        // small asymmetry is symmetrized away
        let p = QuadraticProblem::new(DMatrix::from_row_slice(
            2,
            2,
            &[2.0, 1.0 + 1e-12, 1.0, 2.0],
        ))
        .unwrap();
        assert_relative_eq!(p.matrix()[(0, 1)], p.matrix()[(1, 0)]);
    }

    #[test]
    fn non_square_rejected() {
        let err = QuadraticProblem::new(DMatrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::NotSquare { .. }));
    }

    #[test]
    fn spectrum_reconstructs_matrix() {
        let mut rng = Rng::new(11);
        for _ in 0..5 {
            let a = random_pd_matrix(6, 0.5, 4.0, &mut rng);
            let p = QuadraticProblem::new(a.clone()).unwrap();
            let rec = linalg::from_spectrum(
                p.spectrum().eigenvalues(),
                p.spectrum().eigenvectors(),
            );
            assert!((rec - &a).norm() <= 1e-10 * a.norm());
        }
    }

    #[test]
    fn loss_values() {
        let id = QuadraticProblem::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.loss(&DVector::from_vec(vec![0.0, 0.0])).unwrap(), 0.0);
        assert_relative_eq!(id.loss(&DVector::from_vec(vec![1.0, 1.0])).unwrap(), 1.0);
        let p = two_one();
        assert_relative_eq!(p.loss(&DVector::from_vec(vec![1.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn gradient_values() {
        let id = QuadraticProblem::new(DMatrix::identity(2, 2)).unwrap();
        let theta = DVector::from_vec(vec![3.0, -2.0]);
        assert_relative_eq!(id.gradient(&theta).unwrap(), theta);
        let p = two_one();
        assert_relative_eq!(
            p.gradient(&DVector::from_vec(vec![1.0, 0.0])).unwrap(),
            DVector::from_vec(vec![2.0, 1.0])
        );
        assert_eq!(p.gradient(&DVector::zeros(2)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn dim_mismatch_reported() {
        let p = two_one();
        assert!(matches!(
            p.loss(&DVector::zeros(3)),
            Err(Error::DimMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(42);
        let a = random_pd_matrix(5, 0.5, 3.0, &mut rng);
        let p = QuadraticProblem::new(a).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let theta = DVector::from_fn(5, |_, _| rng.next_gaussian());
            let grad = p.gradient(&theta).unwrap();
            for i in 0..5 {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (p.loss(&plus).unwrap() - p.loss(&minus).unwrap()) / (2.0 * h);
                assert_relative_eq!(grad[i], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn theorem_step_size_values() {
        assert_relative_eq!(theorem_step_size(3, 2.0, 1.0), 0.4);
        assert_relative_eq!(theorem_step_size(1, 1.0, 2.0), 0.5);
        let mut prev = f64::INFINITY;
        for k in 1..1000 {
            let a = theorem_step_size(k, 5.0, 1.0);
            assert!(a < prev);
            prev = a;
        }
        assert!(theorem_step_size(1_000_000_000, 5.0, 1.0) < 1e-8);
    }

    #[test]
    fn schedule_respects_alpha0() {
        let alpha0 = 0.25;
        let lambda_min = 1.0;
        let s = StepSchedule::theorem_decay_from_alpha0(alpha0, lambda_min).unwrap();
        for k in 1..10_000 {
            assert!(s.alpha(k) <= alpha0 + 1e-15);
        }
    }

    #[test]
    fn trace_ctac_closed_forms() {
        let p = two_one();
        assert_eq!(p.trace_ctac(&DMatrix::zeros(2, 2)).unwrap(), 0.0);
        // C = sqrt(A): Tr(C^T A C) = Tr(A^2) = ||A||_F^2 = 10
        let c = covariance::matrix_sqrt(p.matrix()).unwrap();
        assert_relative_eq!(p.trace_ctac(&c).unwrap(), 10.0, epsilon = 1e-10);
        // C = sqrt(diag A) = sqrt(2) I: Tr(C^T A C) = ||diag A||_F^2 = 8
        let cd = DMatrix::from_diagonal(&DVector::from_vec(vec![
            2.0f64.sqrt(),
            2.0f64.sqrt(),
        ]));
        assert_relative_eq!(p.trace_ctac(&cd).unwrap(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_ctac_norm_identities_random() {
        let mut rng = Rng::new(7);
        for _ in 0..10 {
            let dim = 2 + (rng.next_u64() % 19) as usize;
            let a = random_pd_matrix(dim, 0.2, 5.0, &mut rng);
            let p = QuadraticProblem::new(a.clone()).unwrap();
            let c_full = covariance::matrix_sqrt(&a).unwrap();
            let frob2 = a.norm().powi(2);
            assert_relative_eq!(p.trace_ctac(&c_full).unwrap(), frob2, max_relative = 1e-10);
            let diag = a.diagonal();
            let c_diag = DMatrix::from_diagonal(&diag.map(f64::sqrt));
            let diag_frob2: f64 = diag.iter().map(|x| x * x).sum();
            assert_relative_eq!(
                p.trace_ctac(&c_diag).unwrap(),
                diag_frob2,
                max_relative = 1e-10
            );
            // ||diag A||_F <= ||A||_F, strict with off-diagonal mass
            assert!(diag_frob2 <= frob2 + 1e-12);
        }
    }

    #[test]
    fn theorem_bound_values() {
        let id = QuadraticProblem::new(DMatrix::identity(2, 2)).unwrap();
        let theta0 = DVector::from_vec(vec![1.0, 1.0]);
        // nu = max(2 * Tr(I) / 1, 2 * 1) = 4, bound at k=0 is 4/2 = 2
        let b = id
            .theorem_bound(&DMatrix::identity(2, 2), &theta0, 2.0, 0)
            .unwrap();
        assert_relative_eq!(b, 2.0);
        // C = 0: nu = gamma L(theta0)
        let b0 = id
            .theorem_bound(&DMatrix::zeros(2, 2), &theta0, 2.0, 10)
            .unwrap();
        assert_relative_eq!(b0, 2.0 * 1.0 / 12.0);
        // bound decays like 1/k
        let b_far = id
            .theorem_bound(&DMatrix::identity(2, 2), &theta0, 2.0, 1_000_000)
            .unwrap();
        assert!(b_far < 1e-5);
    }

    #[test]
    fn theorem_bound_rejects_bad_gamma() {
        let p = two_one(); // kappa = 3, requires gamma >= 5
        let err = p
            .theorem_bound(&DMatrix::identity(2, 2), &DVector::zeros(2), 2.0, 0)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidGamma { .. }));
        assert!(p
            .theorem_bound(&DMatrix::identity(2, 2), &DVector::zeros(2), 5.0, 0)
            .is_ok());
    }

    #[test]
    fn gamma_for_alpha0_is_tight() {
        // alpha0 = 1/lambda_max on the [0.5, 2] spectrum: gamma = 2*2/0.5...
        // direct check: alpha_1 <= alpha0 and gamma-1 would violate it
        let alpha0 = 0.5;
        let lambda_min = 0.5;
        let g = gamma_for_alpha0(alpha0, lambda_min);
        assert!(theorem_step_size(1, g, lambda_min) <= alpha0 + 1e-15);
        if g > 1.0 {
            assert!(theorem_step_size(1, g - 1.0, lambda_min) > alpha0);
        }
    }
}
