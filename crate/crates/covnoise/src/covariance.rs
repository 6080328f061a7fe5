//! Noise-covariance specifications, symmetric PSD square roots, Gaussian
//! sampling, and the closed-form second moments Tr(C^T C).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Deterministic random generator: a SplitMix64 counter stream with a
/// Box-Muller transform on top.
///
/// The seed-to-stream map is fixed so experiment outputs are reproducible:
/// draw k of the underlying u64 stream is
/// `mix64(seed + (k+1) * 0x9E3779B97F4A7C15)` with the standard SplitMix64
/// finalizer, uniforms come from the top 53 bits, and Gaussians are produced
/// in pairs via `sqrt(-2 ln u1) * (cos, sin)(2 pi u2)` with the second value
/// cached.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    counter: u64,
    spare_gaussian: Option<f64>,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            spare_gaussian: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller, spare cached).
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * phi.sin());
        r * phi.cos()
    }

    pub fn standard_normal_vector(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.next_gaussian())
    }

    /// Uniform sign in {-1, +1}.
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in [0, n) via the multiply-shift reduction.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// `count` distinct indices from [0, n), by partial Fisher-Yates;
    /// the result is in shuffle order.
    pub fn sample_without_replacement(&mut self, n: usize, count: usize) -> Vec<usize> {
        debug_assert!(count <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.next_index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(count);
        idx
    }
}

/// Large/small batch-size pair (M_L, M_S) controlling the noise scale
/// sqrt((M_L - M_S) / (M_L M_S)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchScale {
    m_large: usize,
    m_small: usize,
}

impl BatchScale {
    /// Requires M_L >= M_S >= 1. M_L = M_S gives a zero scale factor,
    /// which turns every Fisher regime into plain descent.
    pub fn new(m_large: usize, m_small: usize) -> Result<Self> {
        if m_small < 1 || m_large < m_small {
            return Err(Error::InvalidBatchSizes { m_large, m_small });
        }
        Ok(Self { m_large, m_small })
    }

    pub fn m_large(&self) -> usize {
        self.m_large
    }

    pub fn m_small(&self) -> usize {
        self.m_small
    }

    /// sqrt((M_L - M_S) / (M_L * M_S)).
    pub fn scale_factor(&self) -> f64 {
        ((self.m_large - self.m_small) as f64 / (self.m_large as f64 * self.m_small as f64))
            .sqrt()
    }
}

/// Symmetric PSD square root via the spectrum. Eigenvalues below
/// 1e-10 * ||S||_F are clamped to zero (empirical Fisher matrices from few
/// samples are rank-deficient); eigenvalues below -1e-6 * ||S||_F are an
/// error.
pub fn matrix_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::NotSquare {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    let norm = s.norm();
    let asym = (s - s.transpose()).norm();
    if asym > 1e-10 * (1.0 + norm) {
        return Err(Error::NotSymmetric {
            asymmetry: if norm > 0.0 { asym / norm } else { asym },
        });
    }
    let (mut vals, vecs) = linalg::symmetric_eigen_ascending(s);
    let clamp = 1e-10 * norm;
    let neg_tol = -1e-6 * norm;
    for v in vals.iter_mut() {
        if *v < neg_tol {
            return Err(Error::NegativeEigenvalue {
                value: *v,
                tolerance: neg_tol,
            });
        }
        if *v < clamp {
            *v = 0.0;
        }
    }
    let sqrt_vals = vals.map(f64::sqrt);
    let root = linalg::from_spectrum(&sqrt_vals, &vecs);
    // exact symmetry keeps downstream second-moment identities clean
    Ok((&root + root.transpose()) * 0.5)
}

/// Structure of the injected noise C xi in the perturbed update.
///
/// Each variant keeps the user-facing data alongside whatever is needed to
/// sample C xi directly.
#[derive(Debug, Clone)]
pub enum CovarianceSpec {
    /// No noise; sampling consumes no randomness so regime comparisons stay
    /// draw-aligned when noise is toggled off.
    Zero { dim: usize },
    /// C = sigma I.
    Isotropic { sigma: f64, dim: usize },
    /// C = sqrt(S) for symmetric PSD S.
    MatrixSqrt { s: DMatrix<f64>, sqrt: DMatrix<f64> },
    /// C = diag(sqrt(v)).
    DiagonalSqrt { v: DVector<f64>, sqrt: DVector<f64> },
    /// C = sqrt(trace / d) I, the variance-matched isotropic baseline.
    TraceIsotropic { trace: f64, dim: usize },
    /// C given explicitly.
    Explicit { c: DMatrix<f64> },
}

impl CovarianceSpec {
    pub fn zero(dim: usize) -> Self {
        Self::Zero { dim }
    }

    pub fn isotropic(sigma: f64, dim: usize) -> Result<Self> {
        if sigma < 0.0 {
            return Err(Error::NegativeEntry { value: sigma });
        }
        Ok(Self::Isotropic { sigma, dim })
    }

    /// Noise with covariance S, i.e. C = sqrt(S).
    pub fn from_matrix(s: DMatrix<f64>) -> Result<Self> {
        let sqrt = matrix_sqrt(&s)?;
        Ok(Self::MatrixSqrt { s, sqrt })
    }

    /// Noise with covariance diag(v), i.e. C = diag(sqrt(v)).
    pub fn from_diagonal(v: DVector<f64>) -> Result<Self> {
        for &x in v.iter() {
            if x < 0.0 {
                return Err(Error::NegativeEntry { value: x });
            }
        }
        let sqrt = v.map(f64::sqrt);
        Ok(Self::DiagonalSqrt { v, sqrt })
    }

    /// Isotropic noise with per-coordinate variance sum(diag_f)/d, matching
    /// the total second moment of the diagonal spec built from `diag_f`.
    pub fn trace_isotropic_from_diag(diag_f: &DVector<f64>) -> Result<Self> {
        for &x in diag_f.iter() {
            if x < 0.0 {
                return Err(Error::NegativeEntry { value: x });
            }
        }
        Ok(Self::TraceIsotropic {
            trace: diag_f.sum(),
            dim: diag_f.len(),
        })
    }

    pub fn explicit(c: DMatrix<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::NotSquare {
                rows: c.nrows(),
                cols: c.ncols(),
            });
        }
        Ok(Self::Explicit { c })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } | Self::Isotropic { dim, .. } | Self::TraceIsotropic { dim, .. } => {
                *dim
            }
            Self::MatrixSqrt { sqrt, .. } => sqrt.nrows(),
            Self::DiagonalSqrt { sqrt, .. } => sqrt.len(),
            Self::Explicit { c } => c.nrows(),
        }
    }

    /// Draw C xi with xi ~ N(0, I). Every variant except `Zero` consumes
    /// exactly `dim` Gaussians.
    pub fn sample(&self, rng: &mut Rng) -> DVector<f64> {
        match self {
            Self::Zero { dim } => DVector::zeros(*dim),
            Self::Isotropic { sigma, dim } => rng.standard_normal_vector(*dim) * *sigma,
            Self::MatrixSqrt { sqrt, .. } => sqrt * rng.standard_normal_vector(sqrt.nrows()),
            Self::DiagonalSqrt { sqrt, .. } => {
                let xi = rng.standard_normal_vector(sqrt.len());
                xi.component_mul(sqrt)
            }
            Self::TraceIsotropic { trace, dim } => {
                rng.standard_normal_vector(*dim) * (trace / *dim as f64).sqrt()
            }
            Self::Explicit { c } => c * rng.standard_normal_vector(c.ncols()),
        }
    }

    /// E ||C xi||^2 = Tr(C^T C) in closed form.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Isotropic { sigma, dim } => sigma * sigma * *dim as f64,
            Self::MatrixSqrt { s, .. } => s.trace(),
            Self::DiagonalSqrt { v, .. } => v.sum(),
            Self::TraceIsotropic { trace, .. } => *trace,
            Self::Explicit { c } => c.iter().map(|x| x * x).sum(),
        }
    }

    /// The matrix C itself (materialized for the isotropic variants).
    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Zero { dim } => DMatrix::zeros(*dim, *dim),
            Self::Isotropic { sigma, dim } => DMatrix::identity(*dim, *dim) * *sigma,
            Self::MatrixSqrt { sqrt, .. } => sqrt.clone(),
            Self::DiagonalSqrt { sqrt, .. } => DMatrix::from_diagonal(sqrt),
            Self::TraceIsotropic { trace, dim } => {
                DMatrix::identity(*dim, *dim) * (trace / *dim as f64).sqrt()
            }
            Self::Explicit { c } => c.clone(),
        }
    }

    /// Rescale the noise by a constant factor (covariance scales by
    /// factor^2).
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Zero { dim } => Self::Zero { dim: *dim },
            Self::Isotropic { sigma, dim } => Self::Isotropic {
                sigma: sigma * factor,
                dim: *dim,
            },
            Self::MatrixSqrt { s, sqrt } => Self::MatrixSqrt {
                s: s * (factor * factor),
                sqrt: sqrt * factor,
            },
            Self::DiagonalSqrt { v, sqrt } => Self::DiagonalSqrt {
                v: v * (factor * factor),
                sqrt: sqrt * factor,
            },
            Self::TraceIsotropic { trace, dim } => Self::TraceIsotropic {
                trace: trace * factor * factor,
                dim: *dim,
            },
            Self::Explicit { c } => Self::Explicit { c: c * factor },
        }
    }
}
