//! Uniform-stability quantities in closed form: Ornstein-Uhlenbeck marginal
//! moments, the Hellinger distance between the induced Gaussians, and the
//! diffusion-scaling limit.
//!
//! The process is d theta = -A theta dt + sqrt(alpha) C dW with A symmetric
//! positive definite. Its marginal at time t is Gaussian with
//! mean(t) = exp(-A t) theta0 and covariance
//! Sigma(t) = alpha P M(t) P^T,
//! M(t)_ij = (P^T C C^T P)_ij (1 - exp(-(d_i + d_j) t)) / (d_i + d_j),
//! where A = P D P^T is the cached eigendecomposition. Sigma satisfies
//! d Sigma/dt = -(A Sigma + Sigma A) + alpha C C^T.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadratic::QuadraticProblem;

/// Ridge added to covariances before determinants/inverses; Sigma(0) = 0 is
/// singular.
const COV_RIDGE: f64 = 1e-12;

/// Continuous-time surrogate of the perturbed descent: drift matrix A,
/// diffusion C, step-size scale alpha, initial point theta0.
#[derive(Debug, Clone)]
pub struct OuSystem {
    problem: QuadraticProblem,
    c: DMatrix<f64>,
    alpha: f64,
    theta0: DVector<f64>,
}

impl OuSystem {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, alpha: f64, theta0: DVector<f64>) -> Result<Self> {
        let problem = QuadraticProblem::new(a)?;
        if c.nrows() != problem.dim() || c.ncols() != problem.dim() {
            return Err(Error::DimMismatch {
                expected: problem.dim(),
                got: c.nrows(),
            });
        }
        if theta0.len() != problem.dim() {
            return Err(Error::DimMismatch {
                expected: problem.dim(),
                got: theta0.len(),
            });
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidStepSize(alpha));
        }
        Ok(Self {
            problem,
            c,
            alpha,
            theta0,
        })
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn problem(&self) -> &QuadraticProblem {
        &self.problem
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    /// mean(t) = P exp(-D t) P^T theta0.
    pub fn mean(&self, t: f64) -> DVector<f64> {
        let spec = self.problem.spectrum();
        let p = spec.eigenvectors();
        let coeffs = p.transpose() * &self.theta0;
        let damped = DVector::from_fn(self.dim(), |i, _| {
            coeffs[i] * (-spec.eigenvalues()[i] * t).exp()
        });
        p * damped
    }

    /// Sigma(t) in closed form; symmetric PSD for t >= 0. The analytic
    /// expression extends smoothly to small negative t, which the Riccati
    /// residual check exploits near t = 0.
    pub fn covariance(&self, t: f64) -> DMatrix<f64> {
        let spec = self.problem.spectrum();
        let p = spec.eigenvectors();
        let d = spec.eigenvalues();
        let cct = &self.c * self.c.transpose();
        let rotated = p.transpose() * cct * p;
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let s = d[i] + d[j];
            // (1 - exp(-s t)) / s, stable for small s t
            let w = -(-s * t).exp_m1() / s;
            rotated[(i, j)] * w
        });
        let sigma = p * m * p.transpose() * self.alpha;
        (&sigma + sigma.transpose()) * 0.5
    }

    /// Frobenius norm of the Riccati defect at time t using a central
    /// difference of the closed form: small for small dt when the closed
    /// form solves d Sigma/dt = -(A Sigma + Sigma A) + alpha C C^T.
    pub fn riccati_residual(&self, t: f64, dt: f64) -> f64 {
        let plus = self.covariance(t + dt);
        let minus = self.covariance(t - dt);
        let derivative = (plus - minus) / (2.0 * dt);
        let sigma = self.covariance(t);
        let a = self.problem.matrix();
        let cct = &self.c * self.c.transpose();
        let defect = derivative + a * &sigma + &sigma * a - cct * self.alpha;
        defect.norm()
    }

    /// Same drift and initial point, diffusion scaled to lambda * C.
    pub fn with_scaled_diffusion(&self, lambda: f64) -> Self {
        Self {
            problem: self.problem.clone(),
            c: &self.c * lambda,
            alpha: self.alpha,
            theta0: self.theta0.clone(),
        }
    }

    /// The Gaussian marginal law at time t.
    pub fn marginal(&self, t: f64) -> Result<GaussianDist> {
        GaussianDist::new(self.mean(t), self.covariance(t))
    }
}

/// A multivariate Gaussian N(mean, cov) with symmetric PSD covariance.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::NotSquare {
                rows: cov.nrows(),
                cols: cov.ncols(),
            });
        }
        if cov.nrows() != mean.len() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let tol = 1e-10 * (1.0 + cov.norm());
        if (&cov - cov.transpose()).norm() > tol {
            return Err(Error::NotSymmetric {
                asymmetry: (&cov - cov.transpose()).norm(),
            });
        }
        let (vals, _) = linalg::symmetric_eigen_ascending(&cov);
        if vals[0] < -tol {
            return Err(Error::NegativeEigenvalue {
                value: vals[0],
                tolerance: -tol,
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Log-determinant via the spectrum; `None` when any eigenvalue is
/// non-positive (singular after regularization).
fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let (vals, _) = linalg::symmetric_eigen_ascending(m);
    let mut acc = 0.0;
    for &v in vals.iter() {
        if v <= 0.0 {
            return None;
        }
        acc += v.ln();
    }
    Some(acc)
}

/// Squared Hellinger distance between two Gaussians:
/// H^2 = 1 - [det(S1)^{1/4} det(S2)^{1/4} / det((S1+S2)/2)^{1/2}]
///         * exp(-1/8 (m1-m2)^T ((S1+S2)/2)^{-1} (m1-m2)),
/// with both covariances regularized by +1e-12 I. Always in [0, 1].
pub fn hellinger_sq(g1: &GaussianDist, g2: &GaussianDist) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimMismatch {
            expected: g1.dim(),
            got: g2.dim(),
        });
    }
    let n = g1.dim();
    let ridge = DMatrix::identity(n, n) * COV_RIDGE;
    let s1 = g1.cov() + &ridge;
    let s2 = g2.cov() + &ridge;
    let avg = (&s1 + &s2) * 0.5;
    let ld1 = log_det_spd(&s1).ok_or(Error::SingularCovariance)?;
    let ld2 = log_det_spd(&s2).ok_or(Error::SingularCovariance)?;
    let (avg_vals, avg_vecs) = linalg::symmetric_eigen_ascending(&avg);
    if avg_vals[0] <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    let ld_avg: f64 = avg_vals.iter().map(|v| v.ln()).sum();
    let diff = g1.mean() - g2.mean();
    // (m1-m2)^T avg^{-1} (m1-m2) through the spectrum
    let rotated = avg_vecs.transpose() * &diff;
    let quad: f64 = (0..n).map(|i| rotated[i] * rotated[i] / avg_vals[i]).sum();
    let log_coeff = 0.25 * ld1 + 0.25 * ld2 - 0.5 * ld_avg;
    let h2 = 1.0 - (log_coeff - 0.125 * quad).exp();
    Ok(h2.clamp(0.0, 1.0))
}

/// Hellinger distance between the two OU marginals at time t after scaling
/// both diffusions by lambda (covariances scale by lambda^2, means are
/// unchanged). Small lambda drives the distance toward one whenever the
/// means differ.
pub fn scaled_hellinger(sys1: &OuSystem, sys2: &OuSystem, lambda: f64, t: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::BadParams(format!("lambda must be positive, got {lambda}")));
    }
    let g1 = sys1.with_scaled_diffusion(lambda).marginal(t)?;
    let g2 = sys2.with_scaled_diffusion(lambda).marginal(t)?;
    hellinger_sq(&g1, &g2)
}
