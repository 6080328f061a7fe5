//! Empirical Fisher estimators (full and diagonal) and the matrix-free
//! Fisher-noise samplers.
//!
//! With per-example log-likelihood gradients g_1..g_M, the uncentered
//! empirical Fisher is F = (1/M) sum_i g_i g_i^T. Its diagonal never needs
//! the d x d matrix: per layer, diag of the (i,i) Fisher block is the sample
//! mean of vec((a^2)(g^2)^T) over the retained backprop pairs.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{BatchScale, CovarianceSpec, Rng};
use crate::error::{Error, Result};
use crate::network::{softmax, Mlp, PerExampleGrads};

/// Memory guard: full d x d Fisher materialization refused above this.
pub const FULL_FISHER_DIM_LIMIT: usize = 5000;

/// Dense empirical Fisher F = scale * (1/M) sum g_i g_i^T.
#[derive(Debug, Clone)]
pub struct EmpiricalFisherFull {
    f: DMatrix<f64>,
    scale: f64,
}

impl EmpiricalFisherFull {
    /// Uncentered outer-product average (the default estimator).
    pub fn from_grads(grads: &PerExampleGrads) -> Result<Self> {
        let d = grads.param_dim();
        if d > FULL_FISHER_DIM_LIMIT {
            return Err(Error::DimensionTooLarge {
                dim: d,
                limit: FULL_FISHER_DIM_LIMIT,
            });
        }
        let m = grads.num_samples() as f64;
        let rows = grads.rows();
        let f = rows.transpose() * rows / m;
        Ok(Self { f, scale: 1.0 })
    }

    /// Centered variant: (1/M) sum (g_i - gbar)(g_i - gbar)^T, for
    /// quadratic-proximity studies.
    pub fn from_grads_centered(grads: &PerExampleGrads) -> Result<Self> {
        let d = grads.param_dim();
        if d > FULL_FISHER_DIM_LIMIT {
            return Err(Error::DimensionTooLarge {
                dim: d,
                limit: FULL_FISHER_DIM_LIMIT,
            });
        }
        let m = grads.num_samples();
        let mean = grads.mean_gradient();
        let mut centered = grads.rows().clone();
        for i in 0..m {
            for j in 0..d {
                centered[(i, j)] -= mean[j];
            }
        }
        let f = centered.transpose() * &centered / m as f64;
        Ok(Self { f, scale: 1.0 })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Multiply the estimator by a scalar (e.g. a squared batch factor).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.f *= factor;
        self.scale *= factor;
        self
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.f.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.f.trace()
    }
}

/// Diagonal of the empirical Fisher.
#[derive(Debug, Clone)]
pub struct FisherDiagonal {
    v: DVector<f64>,
}

impl FisherDiagonal {
    pub fn values(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn trace(&self) -> f64 {
        self.v.sum()
    }

    pub fn into_values(self) -> DVector<f64> {
        self.v
    }
}

/// Diagonal Fisher straight from the retained (a, g) pairs: per layer the
/// sample mean of (a^2) kron (g^2), laid out column-major to match the
/// flattening convention. Never materializes the d x d matrix.
pub fn fisher_diagonal_direct(grads: &PerExampleGrads) -> Result<FisherDiagonal> {
    let pairs = grads.layer_pairs().ok_or(Error::MissingActivations)?;
    let m = pairs.len();
    let mut v = DVector::zeros(grads.param_dim());
    for sample in pairs {
        let mut offset = 0;
        for layer in sample {
            let (rows, cols) = (layer.output_grad.len(), layer.input.len());
            for c in 0..cols {
                let a2 = layer.input[c] * layer.input[c];
                for r in 0..rows {
                    let g = layer.output_grad[r];
                    v[offset + c * rows + r] += a2 * g * g;
                }
            }
            offset += rows * cols;
        }
    }
    Ok(FisherDiagonal { v: v / m as f64 })
}

/// Diagonal Fisher from raw gradient rows: mean of squared entries.
pub fn fisher_diagonal_from_rows(grads: &PerExampleGrads) -> FisherDiagonal {
    let m = grads.num_samples();
    let d = grads.param_dim();
    let mut v = DVector::zeros(d);
    for i in 0..m {
        for j in 0..d {
            let g = grads.rows()[(i, j)];
            v[j] += g * g;
        }
    }
    FisherDiagonal { v: v / m as f64 }
}

/// Sign-weighted gradient sum (1/sqrt(M)) sum sigma_i g_i with Rademacher
/// signs. The draw has mean zero and covariance exactly the uncentered
/// empirical Fisher, without forming any matrix.
pub fn rademacher_fisher_noise(grads: &PerExampleGrads, rng: &mut Rng) -> Result<DVector<f64>> {
    let m = grads.num_samples();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut out = DVector::zeros(grads.param_dim());
    for i in 0..m {
        let sigma = rng.next_sign();
        for j in 0..grads.param_dim() {
            out[j] += sigma * grads.rows()[(i, j)];
        }
    }
    Ok(out / (m as f64).sqrt())
}

/// True-Fisher noise: for each input, draw a label from the model's
/// predictive distribution and backprop that sample's NLL; the scaled sum
/// (1/sqrt(M)) has mean zero over the label sampling and covariance equal to
/// the true Fisher averaged over the inputs.
pub fn true_fisher_noise(
    mlp: &Mlp,
    inputs: &[DVector<f64>],
    rng: &mut Rng,
) -> Result<DVector<f64>> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = DVector::zeros(mlp.param_dim());
    for x in inputs {
        let (logits, _) = mlp.forward(x)?;
        let p = softmax(&logits);
        // inverse-CDF draw from the predictive distribution
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut label = p.len() - 1;
        for (k, &pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                label = k;
                break;
            }
        }
        let batch = crate::network::Batch::new(
            DMatrix::from_row_slice(1, x.len(), x.as_slice()),
            vec![label],
        )?;
        let g = crate::network::per_example_gradients(mlp, &batch)?;
        sum += g.row(0);
    }
    Ok(sum / (inputs.len() as f64).sqrt())
}

/// The full and diagonal Fisher covariance specs of the large/small-batch
/// construction: C_full = s sqrt(F), C_diag = s sqrt(diag F) with
/// s = sqrt((M_L - M_S)/(M_L M_S)). Both share the second moment
/// s^2 Tr(F).
pub fn fisher_covariance_specs(
    grads: &PerExampleGrads,
    bs: BatchScale,
) -> Result<(CovarianceSpec, CovarianceSpec)> {
    let s2 = bs.scale_factor().powi(2);
    let full = EmpiricalFisherFull::from_grads(grads)?;
    let diag = match fisher_diagonal_direct(grads) {
        Ok(d) => d,
        Err(Error::MissingActivations) => fisher_diagonal_from_rows(grads),
        Err(e) => return Err(e),
    };
    let full_spec = CovarianceSpec::from_matrix(full.matrix() * s2)?;
    let diag_spec = CovarianceSpec::from_diagonal(diag.values() * s2)?;
    Ok((full_spec, diag_spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{per_example_gradients, Activation, Batch};
    use approx::assert_relative_eq;

    fn grads_from(rows: &[&[f64]]) -> PerExampleGrads {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        PerExampleGrads::from_rows(DMatrix::from_row_slice(n, d, &flat)).unwrap()
    }

    #[test]
    fn single_gradient_outer_product() {
        let grads = grads_from(&[&[1.0, 2.0]]);
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_relative_eq!(f.matrix(), &expect);
    }

    #[test]
    fn orthogonal_gradients_average() {
        let grads = grads_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
        assert_relative_eq!(f.matrix(), &(DMatrix::identity(2, 2) * 0.5));
    }

    #[test]
    fn zero_gradients_zero_fisher() {
        let grads = grads_from(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
        assert_eq!(f.matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn scaling_multiplies_matrix_and_tracks_factor() {
        let grads = grads_from(&[&[1.0, 2.0]]);
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap().scaled(0.25);
        assert_relative_eq!(f.scale(), 0.25);
        assert_relative_eq!(f.matrix()[(1, 1)], 1.0);
        assert_relative_eq!(f.trace(), 0.25 * 5.0);
    }

    #[test]
    fn centered_fisher_subtracts_mean() {
        let grads = grads_from(&[&[1.0, 0.0], &[3.0, 0.0]]);
        let centered = EmpiricalFisherFull::from_grads_centered(&grads).unwrap();
        // mean (2, 0); deviations (+-1, 0); covariance [[1,0],[0,0]]
        assert_relative_eq!(centered.matrix()[(0, 0)], 1.0);
        assert_relative_eq!(centered.matrix()[(1, 1)], 0.0);
    }

    fn random_mlp_grads(seed: u64, dims: &[usize], n: usize) -> PerExampleGrads {
        let mut rng = Rng::new(seed);
        let mlp = Mlp::random(dims, Activation::Tanh, 1.2, &mut rng).unwrap();
        let classes = *dims.last().unwrap();
        let inputs = DMatrix::from_fn(n, dims[0], |_, _| rng.next_gaussian());
        let labels = (0..n).map(|i| i % classes).collect();
        per_example_gradients(&mlp, &Batch::new(inputs, labels).unwrap()).unwrap()
    }

    #[test]
    fn diagonal_direct_single_sample_one_layer() {
        // a = (1, 2), g = (3) -> gradient row (3, 6), diagonal (9, 36)
        let mut rows = DMatrix::zeros(1, 2);
        rows[(0, 0)] = 3.0;
        rows[(0, 1)] = 6.0;
        let pairs = vec![vec![crate::network::LayerPair {
            input: DVector::from_vec(vec![1.0, 2.0]),
            output_grad: DVector::from_vec(vec![3.0]),
        }]];
        let grads = PerExampleGrads::from_parts(rows, vec![0.0], Some(pairs));
        let diag = fisher_diagonal_direct(&grads).unwrap();
        assert_relative_eq!(diag.values(), &DVector::from_vec(vec![9.0, 36.0]));
    }

    #[test]
    fn diagonal_direct_matches_full_diagonal() {
        for seed in 0..8 {
            let grads = random_mlp_grads(300 + seed, &[3, 4, 3], 6);
            let full = EmpiricalFisherFull::from_grads(&grads).unwrap();
            let direct = fisher_diagonal_direct(&grads).unwrap();
            let full_diag = full.diagonal();
            let err = (direct.values() - &full_diag).norm();
            assert!(
                err <= 1e-10 * (1.0 + full_diag.norm()),
                "seed {seed}: {err}"
            );
        }
    }

    #[test]
    fn diagonal_direct_requires_activations() {
        let grads = grads_from(&[&[1.0, 2.0]]);
        assert!(matches!(
            fisher_diagonal_direct(&grads),
            Err(Error::MissingActivations)
        ));
        // rows-based fallback still works
        let diag = fisher_diagonal_from_rows(&grads);
        assert_relative_eq!(diag.values(), &DVector::from_vec(vec![1.0, 4.0]));
    }

    #[test]
    fn diag_frobenius_never_exceeds_full() {
        for seed in 0..5 {
            let grads = random_mlp_grads(700 + seed, &[4, 5, 2], 8);
            let full = EmpiricalFisherFull::from_grads(&grads).unwrap();
            let diag_norm = full.diagonal().norm();
            assert!(diag_norm <= full.matrix().norm() + 1e-12);
        }
    }

    #[test]
    fn rademacher_exact_enumeration_m2() {
        // g1 = (1,0), g2 = (0,1): over the 4 sign patterns the sample
        // covariance of (sigma1 g1 + sigma2 g2)/sqrt(2) is (1/2) I = F
        let grads = grads_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
        let mut cov = DMatrix::zeros(2, 2);
        for pattern in 0..4u32 {
            let s1 = if pattern & 1 == 0 { 1.0 } else { -1.0 };
            let s2 = if pattern & 2 == 0 { 1.0 } else { -1.0 };
            let draw = DVector::from_vec(vec![s1, s2]) / 2.0f64.sqrt();
            cov += &draw * draw.transpose();
        }
        cov /= 4.0;
        assert_relative_eq!(&cov, f.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn rademacher_single_sample_sign_symmetry() {
        let grads = grads_from(&[&[2.0, 0.0]]);
        let mut rng = Rng::new(4);
        let mut seen_pos = false;
        let mut seen_neg = false;
        for _ in 0..64 {
            let v = rademacher_fisher_noise(&grads, &mut rng).unwrap();
            assert_relative_eq!(v[0].abs(), 2.0);
            assert_eq!(v[1], 0.0);
            if v[0] > 0.0 {
                seen_pos = true;
            } else {
                seen_neg = true;
            }
        }
        assert!(seen_pos && seen_neg);
    }

    #[test]
    fn rademacher_monte_carlo_covariance() {
        let mut rng = Rng::new(902);
        let rows = DMatrix::from_fn(6, 5, |_, _| rng.next_gaussian());
        let grads = PerExampleGrads::from_rows(rows).unwrap();
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
        let n = 100_000;
        let mut cov = DMatrix::zeros(5, 5);
        for _ in 0..n {
            let v = rademacher_fisher_noise(&grads, &mut rng).unwrap();
            cov += &v * v.transpose();
        }
        cov /= n as f64;
        let rel = (&cov - f.matrix()).norm() / f.matrix().norm();
        assert!(rel < 0.1, "relative error {rel}");
    }

    #[test]
    fn true_fisher_zero_mean_under_uniform_predictive() {
        // all-zero weights: uniform predictive distribution
        let mlp = Mlp::new(vec![DMatrix::zeros(3, 2)], Activation::Relu).unwrap();
        let inputs = vec![
            DVector::from_vec(vec![1.0, 0.5]),
            DVector::from_vec(vec![-0.3, 1.2]),
        ];
        let mut rng = Rng::new(41);
        let n = 20_000;
        let mut mean = DVector::zeros(mlp.param_dim());
        let mut second = 0.0;
        for _ in 0..n {
            let v = true_fisher_noise(&mlp, &inputs, &mut rng).unwrap();
            second += v.norm_squared();
            mean += v;
        }
        mean /= n as f64;
        let tr = second / n as f64;
        assert!(mean.norm() <= 4.0 * (tr / n as f64).sqrt());
    }

    #[test]
    fn true_fisher_two_class_enumeration() {
        // single input, 2 classes: covariance over exhaustive label draw
        // weighted by p equals sum_y p(y) grad(y) grad(y)^T
        let mut rng = Rng::new(55);
        let mlp = Mlp::random(&[2, 2], Activation::Relu, 0.7, &mut rng).unwrap();
        let x = DVector::from_vec(vec![0.8, -0.4]);
        let (logits, _) = mlp.forward(&x).unwrap();
        let p = softmax(&logits);
        let mut expected = DMatrix::zeros(4, 4);
        let mut mean = DVector::zeros(4);
        for y in 0..2 {
            let batch = Batch::new(DMatrix::from_row_slice(1, 2, x.as_slice()), vec![y]).unwrap();
            let g = per_example_gradients(&mlp, &batch).unwrap().row(0);
            expected += p[y] * &g * g.transpose();
            mean += p[y] * g;
        }
        // E_y[grad nll] = 0, so the enumeration covariance is the raw second moment
        assert!(mean.norm() < 1e-12);
        let n = 50_000;
        let mut cov = DMatrix::zeros(4, 4);
        for _ in 0..n {
            let v = true_fisher_noise(&mlp, std::slice::from_ref(&x), &mut rng).unwrap();
            cov += &v * v.transpose();
        }
        cov /= n as f64;
        let rel = (&cov - &expected).norm() / expected.norm();
        assert!(rel < 0.1, "relative error {rel}");
    }

    #[test]
    fn true_fisher_saturated_predictive_is_quiet() {
        // huge weights saturate the softmax; gradients of the sampled label
        // are then near zero
        let w = DMatrix::from_row_slice(2, 2, &[50.0, 0.0, -50.0, 0.0]);
        let mlp = Mlp::new(vec![w], Activation::Relu).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let mut rng = Rng::new(6);
        for _ in 0..100 {
            let v = true_fisher_noise(&mlp, std::slice::from_ref(&x), &mut rng).unwrap();
            assert!(v.norm() < 1e-10);
        }
    }

    #[test]
    fn covariance_specs_share_second_moment() {
        let grads = random_mlp_grads(19, &[3, 4, 2], 10);
        let bs = BatchScale::new(4096, 128).unwrap();
        let (full, diag) = fisher_covariance_specs(&grads, bs).unwrap();
        assert_relative_eq!(
            full.second_moment(),
            diag.second_moment(),
            max_relative = 1e-10
        );
        let s2 = bs.scale_factor().powi(2);
        assert_relative_eq!(s2, 3968.0 / 524_288.0, epsilon = 1e-12);
        let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
        assert_relative_eq!(
            full.second_moment(),
            s2 * f.trace(),
            max_relative = 1e-10
        );
        // equal batch sizes: both specs are zero-noise
        let (fz, dz) = fisher_covariance_specs(&grads, BatchScale::new(64, 64).unwrap()).unwrap();
        assert_eq!(fz.second_moment(), 0.0);
        assert_eq!(dz.second_moment(), 0.0);
    }

    #[test]
    fn full_materialization_gated_by_dimension() {
        let rows = DMatrix::zeros(1, FULL_FISHER_DIM_LIMIT + 1);
        let grads = PerExampleGrads::from_rows(rows).unwrap();
        assert!(matches!(
            EmpiricalFisherFull::from_grads(&grads),
            Err(Error::DimensionTooLarge { .. })
        ));
        assert!(matches!(
            EmpiricalFisherFull::from_grads_centered(&grads),
            Err(Error::DimensionTooLarge { .. })
        ));
        // diagonal and Rademacher paths stay open
        assert!(fisher_diagonal_from_rows(&grads).values().len() > FULL_FISHER_DIM_LIMIT);
        let mut rng = Rng::new(1);
        assert!(rademacher_fisher_noise(&grads, &mut rng).is_ok());
    }

    #[test]
    fn fisher_psd_within_tolerance() {
        for seed in 0..5 {
            let grads = random_mlp_grads(900 + seed, &[3, 3, 2], 4);
            let f = EmpiricalFisherFull::from_grads(&grads).unwrap();
            let (vals, _) = crate::linalg::symmetric_eigen_ascending(f.matrix());
            assert!(vals[0] >= -1e-10 * f.matrix().norm());
        }
    }
}
