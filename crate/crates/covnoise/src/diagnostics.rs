//! Measurement suite: Frobenius norms of the Fisher variants, Monte-Carlo
//! gradient variance per layer, and the maximum Hessian eigenvalue via power
//! iteration on finite-difference Hessian-vector products.

use nalgebra::DVector;

use crate::covariance::Rng;
use crate::error::{Error, Result};
use crate::fisher;
use crate::network::{per_example_gradients, Batch, Mlp, PerExampleGrads};
use crate::optimizer::{NoiseKind, NoiseRegime};

/// (||F||_F, ||diag F||_F) for the uncentered empirical Fisher, with the
/// full norm computed by the Gram trick
/// ||F||_F^2 = (1/M^2) sum_{i,j} (g_i . g_j)^2, never materializing F.
pub fn frobenius_pair(grads: &PerExampleGrads) -> Result<(f64, f64)> {
    let m = grads.num_samples();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let rows = grads.rows();
    let gram = rows * rows.transpose();
    let full_sq: f64 = gram.iter().map(|&x| x * x).sum::<f64>() / (m as f64 * m as f64);
    let diag = match fisher::fisher_diagonal_direct(grads) {
        Ok(d) => d,
        Err(Error::MissingActivations) => fisher::fisher_diagonal_from_rows(grads),
        Err(e) => return Err(e),
    };
    Ok((full_sq.sqrt(), diag.values().norm()))
}

/// Per-layer mean of per-parameter variances of the effective update
/// direction across Monte-Carlo batch draws.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub per_layer: Vec<LayerVariance>,
    pub batch_size: usize,
    pub draws: usize,
    pub regime: String,
}

#[derive(Debug, Clone)]
pub struct LayerVariance {
    pub layer: usize,
    pub mean_variance: f64,
}

/// Monte-Carlo gradient-variance estimate: each draw samples `batch_size`
/// examples without replacement, computes the batch gradient plus the
/// regime's noise, and the per-parameter variance across draws is averaged
/// within each layer.
///
/// Variances accumulate as deviations from the first draw, so identical
/// draws (full batch, no noise) report exactly zero.
pub fn avg_gradient_variance(
    mlp: &Mlp,
    data: &Batch,
    batch_size: usize,
    regime: &NoiseRegime,
    draws: usize,
    rng: &mut Rng,
) -> Result<VarianceReport> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::BadBatchSize {
            batch_size,
            available: data.len(),
        });
    }
    if draws < 2 {
        return Err(Error::BadParams("draws must be >= 2".into()));
    }
    let d = mlp.param_dim();
    let mut first: Option<DVector<f64>> = None;
    let mut sum_delta = DVector::<f64>::zeros(d);
    let mut sum_delta_sq = DVector::<f64>::zeros(d);
    for _ in 0..draws {
        let batch = if batch_size == data.len() {
            data.clone()
        } else {
            data.subset(&rng.sample_without_replacement(data.len(), batch_size))?
        };
        let needs_rows = !matches!(regime.kind(), NoiseKind::None | NoiseKind::Fixed(_));
        let (grad, grads) = if needs_rows {
            let g = per_example_gradients(mlp, &batch)?;
            (g.mean_gradient(), Some(g))
        } else {
            (crate::network::batch_loss_and_gradient(mlp, &batch)?.1, None)
        };
        let noise = match regime.kind() {
            NoiseKind::None => DVector::zeros(d),
            NoiseKind::Fixed(spec) => spec.sample(rng),
            NoiseKind::FisherFull(bs) => {
                let full = fisher::EmpiricalFisherFull::from_grads(grads.as_ref().unwrap())?;
                crate::covariance::CovarianceSpec::from_matrix(
                    full.matrix() * bs.scale_factor().powi(2),
                )?
                .sample(rng)
            }
            NoiseKind::FisherDiag(bs) => {
                let diag = fisher::fisher_diagonal_direct(grads.as_ref().unwrap())?;
                crate::covariance::CovarianceSpec::from_diagonal(
                    diag.values() * bs.scale_factor().powi(2),
                )?
                .sample(rng)
            }
            NoiseKind::FisherRademacher(bs) => {
                fisher::rademacher_fisher_noise(grads.as_ref().unwrap(), rng)?
                    * bs.scale_factor()
            }
            NoiseKind::FisherTrace(bs) => {
                let diag = fisher::fisher_diagonal_direct(grads.as_ref().unwrap())?;
                crate::covariance::CovarianceSpec::trace_isotropic_from_diag(
                    &(diag.values() * bs.scale_factor().powi(2)),
                )?
                .sample(rng)
            }
            NoiseKind::TrueFisher(bs) => {
                let inputs: Vec<DVector<f64>> =
                    (0..batch.len()).map(|i| batch.input(i)).collect();
                fisher::true_fisher_noise(mlp, &inputs, rng)? * bs.scale_factor()
            }
        };
        let direction = grad + noise;
        match &first {
            None => first = Some(direction),
            Some(base) => {
                let delta = direction - base;
                sum_delta += &delta;
                sum_delta_sq += delta.component_mul(&delta);
            }
        }
    }
    let n = draws as f64;
    // sample variance from shifted accumulators; exact zero for identical draws
    let variances = DVector::from_fn(d, |j, _| {
        (sum_delta_sq[j] - sum_delta[j] * sum_delta[j] / n) / (n - 1.0)
    });
    let mut per_layer = Vec::with_capacity(mlp.num_layers());
    let mut offset = 0;
    for (layer, w) in mlp.weights().iter().enumerate() {
        let count = w.nrows() * w.ncols();
        let mean_variance =
            variances.as_slice()[offset..offset + count].iter().sum::<f64>() / count as f64;
        per_layer.push(LayerVariance {
            layer,
            mean_variance,
        });
        offset += count;
    }
    Ok(VarianceReport {
        per_layer,
        batch_size,
        draws,
        regime: regime.kind().name().to_string(),
    })
}

/// Central-difference Hessian-vector product:
/// (grad(theta + h v_hat) - grad(theta - h v_hat)) / (2h) * ||v||,
/// exact up to roundoff for quadratic losses. Returns zero for v = 0.
pub fn hessian_vector_product<F>(
    loss_fn: F,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let norm = v.norm();
    if norm == 0.0 {
        return DVector::zeros(v.len());
    }
    let v_hat = v / norm;
    let (_, g_plus) = loss_fn(&(theta + &v_hat * h));
    let (_, g_minus) = loss_fn(&(theta - &v_hat * h));
    (g_plus - g_minus) * (norm / (2.0 * h))
}

/// Default finite-difference step: 1e-4 * (1 + ||theta||).
pub fn default_hvp_step(theta: &DVector<f64>) -> f64 {
    1e-4 * (1.0 + theta.norm())
}

/// Dominant-eigenvalue estimate from power iteration.
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub lambda_max: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Power iteration on Hessian-vector products from a random unit start.
/// Reports the Rayleigh quotient; `converged` is false when the relative
/// residual ||Hv - lambda v|| / |lambda| never dropped to `tol`.
pub fn max_hessian_eigenvalue<F>(
    loss_fn: F,
    theta: &DVector<f64>,
    max_iters: usize,
    tol: f64,
    rng: &mut Rng,
) -> EigenEstimate
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let d = theta.len();
    let h = default_hvp_step(theta);
    let mut v = rng.standard_normal_vector(d);
    v /= v.norm();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let hv = hessian_vector_product(&loss_fn, theta, &v, h);
        lambda = v.dot(&hv);
        let denom = lambda.abs().max(f64::MIN_POSITIVE);
        residual = (&hv - &v * lambda).norm() / denom;
        let norm = hv.norm();
        if norm == 0.0 {
            // zero Hessian: the quotient is exactly zero
            return EigenEstimate {
                lambda_max: 0.0,
                iterations: it,
                residual: 0.0,
                converged: true,
            };
        }
        v = hv / norm;
        if residual <= tol {
            return EigenEstimate {
                lambda_max: lambda,
                iterations: it,
                residual,
                converged: true,
            };
        }
    }
    EigenEstimate {
        lambda_max: lambda,
        iterations,
        residual,
        converged: false,
    }
}
