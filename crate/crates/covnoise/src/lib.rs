//! Perturbed gradient descent with structured covariance noise.
//!
//! The update rule is
//!
//! ```text
//! theta_{k+1} = theta_k - alpha_k grad L(theta_k) + alpha_k C(theta_k) xi_k
//! ```
//!
//! with xi_k standard Gaussian. The crate provides the noise structures
//! built from per-example gradients (full and diagonal empirical Fisher,
//! Rademacher and resampled-label samplers, trace-matched isotropic), the
//! convex-quadratic testbed with its decaying-step-size convergence bound,
//! the diagnostics used to compare the structures (Frobenius norms, gradient
//! variance, extreme Hessian eigenvalues), and closed-form
//! Ornstein-Uhlenbeck / Hellinger quantities for the stability view of how
//! noise structure affects generalization.
//!
//! The `covnoise` binary drives the experiment suites from JSON configs; see
//! the `cli` module and the repository README.
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use covnoise::{CovarianceSpec, QuadraticProblem, RunConfig, StepSchedule};
//!
//! let problem = QuadraticProblem::new(
//!     DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
//! )?;
//! // noise with covariance A, i.e. C = sqrt(A)
//! let noise = CovarianceSpec::from_matrix(problem.matrix().clone())?;
//! let schedule = StepSchedule::theorem_decay(12.0, problem.lambda_min())?;
//! let cfg = RunConfig::new(2000, schedule, 42)?;
//! let theta0 = DVector::from_vec(vec![1.4, -1.4]);
//! let log = covnoise::run_quadratic(&problem, &noise, &cfg, &theta0)?;
//!
//! // the trajectory respects the expectation bound's shape: by step 2000
//! // the loss is far below where it started
//! assert!(log.final_loss().unwrap() < 0.01);
//! let c = noise.matrix();
//! let bound = problem.theorem_bound(&c, &theta0, 12.0, 2000)?;
//! assert!(bound > 0.0);
//! # Ok::<(), covnoise::Error>(())
//! ```

// `!(x > 0.0)` style guards intentionally reject NaN along with
// nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod fisher;
pub mod harness;
mod linalg;
pub mod network;
pub mod optimizer;
pub mod quadratic;
pub mod stability;

pub mod cli;

pub use covariance::{matrix_sqrt, BatchScale, CovarianceSpec, Rng};
pub use error::{Error, Result};
pub use fisher::{
    fisher_covariance_specs, fisher_diagonal_direct, rademacher_fisher_noise, true_fisher_noise,
    EmpiricalFisherFull, FisherDiagonal,
};
pub use network::{
    batch_loss_and_gradient, nll_loss, per_example_gradients, Activation, Batch, Mlp,
    PerExampleGrads,
};
pub use optimizer::{
    iterations_to_epsilon, pgd_step, run_mlp, run_quadratic, NoiseKind, NoiseRegime, RunConfig,
    TrajectoryLog,
};
pub use quadratic::{
    gamma_for_alpha0, theorem_step_size, QuadraticProblem, SpectralDecomposition, StepSchedule,
};
pub use stability::{hellinger_sq, scaled_hellinger, GaussianDist, OuSystem};
