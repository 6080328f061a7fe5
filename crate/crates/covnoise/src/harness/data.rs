//! Dataset generation and the container tying a batch to its provenance.

use nalgebra::{DMatrix, DVector};

use crate::covariance::Rng;
use crate::error::{Error, Result};
use crate::network::Batch;
use crate::quadratic::QuadraticProblem;

/// A batch plus metadata: generator parameters or a source-file digest.
#[derive(Debug, Clone)]
pub struct Dataset {
    batch: Batch,
    name: String,
    /// SHA-256 of the source files for file-backed data.
    digest: Option<String>,
}

impl Dataset {
    pub fn new(batch: Batch, name: impl Into<String>, digest: Option<String>) -> Self {
        Self {
            batch,
            name: name.into(),
            digest,
        }
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    pub fn into_batch(self) -> Batch {
        self.batch
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn digest(&self) -> Option<&str> {
        self.digest.as_deref()
    }

    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }
}

/// Random symmetric positive-definite matrix with eigenvalues uniform in
/// [eig_min, eig_max] and a Haar-ish random orthogonal basis (QR of a
/// Gaussian matrix).
pub fn random_pd_matrix(dim: usize, eig_min: f64, eig_max: f64, rng: &mut Rng) -> DMatrix<f64> {
    assert!(dim > 0 && eig_min > 0.0 && eig_max >= eig_min);
    let gaussian = DMatrix::from_fn(dim, dim, |_, _| rng.next_gaussian());
    let q = gaussian.qr().q();
    let eigs = DVector::from_fn(dim, |i, _| {
        if dim == 1 {
            (eig_min + eig_max) * 0.5
        } else {
            eig_min + (eig_max - eig_min) * i as f64 / (dim - 1) as f64
        }
    });
    let m = crate::linalg::from_spectrum(&eigs, &q);
    (&m + m.transpose()) * 0.5
}

/// Class-balanced Gaussian blobs at fixed simplex centers 2 e_c. Sample i
/// belongs to class i mod `classes`; `spread` is the per-coordinate noise
/// standard deviation.
pub fn gen_blobs(
    n: usize,
    in_dim: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || n < classes {
        return Err(Error::BadParams(format!(
            "need at least one sample per class: n={n}, classes={classes}"
        )));
    }
    if classes > in_dim {
        return Err(Error::BadParams(format!(
            "simplex centers need in_dim >= classes: in_dim={in_dim}, classes={classes}"
        )));
    }
    if spread < 0.0 {
        return Err(Error::NegativeEntry { value: spread });
    }
    let mut rng = Rng::new(seed);
    let mut inputs = DMatrix::zeros(n, in_dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        for j in 0..in_dim {
            let center = if j == class { 2.0 } else { 0.0 };
            inputs[(i, j)] = center + spread * rng.next_gaussian();
        }
        labels.push(class);
    }
    Ok(Dataset::new(
        Batch::new(inputs, labels)?,
        format!("blobs_n{n}_d{in_dim}_c{classes}"),
        None,
    ))
}

/// Fixed ground-truth parameters of the toy regression.
pub const TOY2D_TRUE_W: (f64, f64) = (2.0, -1.0);

/// One-dimensional linear regression with intercept:
/// y = w1 x + w2 + noise, x ~ N(0, 1). The induced least-squares loss is an
/// exact two-dimensional quadratic in (w1, w2); the returned problem is that
/// quadratic in coordinates centered at the minimizer, with
/// A = (1/n) sum (x_i, 1)(x_i, 1)^T the empirical second-moment matrix.
///
/// The dataset stores rows (x_i, y_i) with dummy labels.
pub fn gen_toy_2d(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, QuadraticProblem)> {
    if n < 2 {
        return Err(Error::BadParams(format!("need n >= 2 samples, got {n}")));
    }
    if noise_sd < 0.0 {
        return Err(Error::NegativeEntry { value: noise_sd });
    }
    let mut rng = Rng::new(seed);
    let mut rows = DMatrix::zeros(n, 2);
    let (w1, w2) = TOY2D_TRUE_W;
    let mut a = DMatrix::zeros(2, 2);
    for i in 0..n {
        let x = rng.next_gaussian();
        let y = w1 * x + w2 + noise_sd * rng.next_gaussian();
        rows[(i, 0)] = x;
        rows[(i, 1)] = y;
        a[(0, 0)] += x * x;
        a[(0, 1)] += x;
        a[(1, 0)] += x;
        a[(1, 1)] += 1.0;
    }
    a /= n as f64;
    let problem = QuadraticProblem::new(a)?;
    let dataset = Dataset::new(
        Batch::new(rows, vec![0; n])?,
        format!("toy2d_n{n}"),
        None,
    );
    Ok((dataset, problem))
}

/// Least-squares solution of the stored toy regression by the normal
/// equations A w = b with b = (1/n) sum (x_i, 1) y_i.
pub fn toy2d_least_squares(dataset: &Dataset) -> Result<DVector<f64>> {
    let rows = dataset.batch().inputs();
    let n = rows.nrows();
    let mut a = DMatrix::zeros(2, 2);
    let mut b = DVector::zeros(2);
    for i in 0..n {
        let (x, y) = (rows[(i, 0)], rows[(i, 1)]);
        a[(0, 0)] += x * x;
        a[(0, 1)] += x;
        a[(1, 0)] += x;
        a[(1, 1)] += 1.0;
        b[0] += x * y;
        b[1] += y;
    }
    a /= n as f64;
    b /= n as f64;
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::BadParams("degenerate design matrix".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn blobs_balanced_and_deterministic() {
        let d = gen_blobs(4, 2, 2, 0.5, 9).unwrap();
        let counts = d.batch().labels().iter().filter(|&&c| c == 0).count();
        assert_eq!(counts, 2);
        let d2 = gen_blobs(4, 2, 2, 0.5, 9).unwrap();
        assert_eq!(d.batch().inputs(), d2.batch().inputs());
        let d3 = gen_blobs(4, 2, 2, 0.5, 10).unwrap();
        assert_ne!(d.batch().inputs(), d3.batch().inputs());
    }

    #[test]
    fn blobs_zero_spread_hits_centers() {
        let d = gen_blobs(6, 3, 3, 0.0, 1).unwrap();
        for i in 0..6 {
            let class = i % 3;
            for j in 0..3 {
                let expect = if j == class { 2.0 } else { 0.0 };
                assert_eq!(d.batch().inputs()[(i, j)], expect);
            }
        }
    }

    #[test]
    fn blobs_param_validation() {
        assert!(gen_blobs(1, 2, 2, 0.1, 0).is_err());
        assert!(gen_blobs(8, 2, 3, 0.1, 0).is_err());
    }

    #[test]
    fn toy2d_noiseless_recovers_weights() {
        let (data, problem) = gen_toy_2d(64, 0.0, 3).unwrap();
        let w = toy2d_least_squares(&data).unwrap();
        assert_relative_eq!(w[0], TOY2D_TRUE_W.0, epsilon = 1e-8);
        assert_relative_eq!(w[1], TOY2D_TRUE_W.1, epsilon = 1e-8);
        assert!(problem.lambda_min() > 0.0);
    }

    #[test]
    fn toy2d_quadratic_is_pd_gram() {
        let (_, problem) = gen_toy_2d(2, 0.3, 5).unwrap();
        assert!(problem.lambda_min() > 0.0);
        assert_relative_eq!(
            problem.matrix()[(0, 1)],
            problem.matrix()[(1, 0)],
            epsilon = 1e-15
        );
    }

    #[test]
    fn toy2d_least_squares_matches_direct_inverse() {
        let (data, problem) = gen_toy_2d(40, 0.2, 6).unwrap();
        let w = toy2d_least_squares(&data).unwrap();
        // recompute b and check A w = b
        let rows = data.batch().inputs();
        let mut b = DVector::zeros(2);
        for i in 0..40 {
            b[0] += rows[(i, 0)] * rows[(i, 1)];
            b[1] += rows[(i, 1)];
        }
        b /= 40.0;
        assert!((problem.matrix() * &w - b).norm() < 1e-10);
    }

    #[test]
    fn random_pd_matrix_is_pd() {
        let mut rng = Rng::new(77);
        let m = random_pd_matrix(6, 0.5, 4.0, &mut rng);
        let p = QuadraticProblem::new(m).unwrap();
        assert!(p.lambda_min() >= 0.5 - 1e-9);
        assert!(p.lambda_max() <= 4.0 + 1e-9);
    }
}
