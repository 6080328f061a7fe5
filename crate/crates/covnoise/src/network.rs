//! Minimal feed-forward network with softmax/negative-log-likelihood loss,
//! backpropagation, and per-example gradients.
//!
//! Layers are bias-free: z_i = W_i a_{i-1}, a_i = phi(z_i), with the final
//! pre-activation used as class logits. Per-example log-likelihood gradients
//! decompose as DW_i = g_i a_{i-1}^T with g_i the pre-activation derivative,
//! which is what every Fisher estimator downstream consumes. Parameters
//! flatten layer by layer, column-major within each layer.

use nalgebra::{DMatrix, DVector};

use crate::covariance::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Tanh => z.tanh(),
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - z.tanh() * z.tanh(),
        }
    }
}

/// Bias-free multilayer perceptron. Users wanting affine maps append a
/// constant-1 input feature.
#[derive(Debug, Clone)]
pub struct Mlp {
    weights: Vec<DMatrix<f64>>,
    activation: Activation,
}

impl Mlp {
    pub fn new(weights: Vec<DMatrix<f64>>, activation: Activation) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ShapeMismatch("network needs at least one layer".into()));
        }
        for w in weights.windows(2) {
            if w[1].ncols() != w[0].nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer shapes do not compose: {}x{} then {}x{}",
                    w[0].nrows(),
                    w[0].ncols(),
                    w[1].nrows(),
                    w[1].ncols()
                )));
            }
        }
        Ok(Self { weights, activation })
    }

    /// Gaussian init with per-layer scale `init_scale / sqrt(fan_in)`.
    pub fn random(dims: &[usize], activation: Activation, init_scale: f64, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::ShapeMismatch("need input and output dims".into()));
        }
        let weights = dims
            .windows(2)
            .map(|d| {
                let std = init_scale / (d[0] as f64).sqrt();
                DMatrix::from_fn(d[1], d[0], |_, _| std * rng.next_gaussian())
            })
            .collect();
        Self::new(weights, activation)
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.weights[self.weights.len() - 1].nrows()
    }

    /// Total parameter count d.
    pub fn param_dim(&self) -> usize {
        self.weights.iter().map(|w| w.nrows() * w.ncols()).sum()
    }

    /// Concatenated column-major parameter vector.
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.param_dim());
        for w in &self.weights {
            out.extend_from_slice(w.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Overwrite all weights from a flat vector (inverse of `flatten`).
    pub fn set_flat(&mut self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.param_dim() {
            return Err(Error::DimMismatch {
                expected: self.param_dim(),
                got: v.len(),
            });
        }
        let mut offset = 0;
        for w in &mut self.weights {
            let n = w.nrows() * w.ncols();
            w.as_mut_slice().copy_from_slice(&v.as_slice()[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// A new network with the same shape and the given flat parameters.
    pub fn with_flat(&self, v: &DVector<f64>) -> Result<Self> {
        let mut m = self.clone();
        m.set_flat(v)?;
        Ok(m)
    }

    /// Forward pass for one input; returns logits plus all activations and
    /// pre-activations.
    pub fn forward(&self, x: &DVector<f64>) -> Result<(DVector<f64>, ForwardCache)> {
        if x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input dim {} does not match first layer {}",
                x.len(),
                self.in_dim()
            )));
        }
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre_activations = Vec::with_capacity(layers);
        activations.push(x.clone());
        let mut a = x.clone();
        for (i, w) in self.weights.iter().enumerate() {
            let z = w * &a;
            pre_activations.push(z.clone());
            a = if i + 1 < layers {
                z.map(|v| self.activation.apply(v))
            } else {
                z
            };
            activations.push(a.clone());
        }
        let logits = pre_activations[layers - 1].clone();
        Ok((
            logits,
            ForwardCache {
                activations,
                pre_activations,
            },
        ))
    }
}

/// Per-layer activations a_i and pre-activations z_i for one input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// a_0 = x through a_L (post-activation, logits for the last layer).
    pub activations: Vec<DVector<f64>>,
    /// z_1 through z_L.
    pub pre_activations: Vec<DVector<f64>>,
}

/// log(sum(exp(logits))) computed stably.
fn log_sum_exp(logits: &DVector<f64>) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// -log of the label's softmax probability, stable for logit magnitudes up
/// to ~1e4.
pub fn nll_loss(logits: &DVector<f64>, label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[label])
}

/// softmax(logits), stable.
pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let lse = log_sum_exp(logits);
    logits.map(|z| (z - lse).exp())
}

/// A labelled classification batch; inputs are one row per sample.
#[derive(Debug, Clone)]
pub struct Batch {
    inputs: DMatrix<f64>,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if labels.len() != inputs.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        self.inputs.row(i).transpose()
    }

    /// New batch restricted to the given sample indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut inputs = DMatrix::zeros(indices.len(), self.inputs.ncols());
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            inputs.set_row(row, &self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, labels)
    }
}

/// Retained (a_{i-1}, g_i) pair for one layer of one sample.
#[derive(Debug, Clone)]
pub struct LayerPair {
    /// Input activation a_{i-1}.
    pub input: DVector<f64>,
    /// Pre-activation derivative g_i = d loss / d z_i.
    pub output_grad: DVector<f64>,
}

/// Per-example loss gradients: row i of `rows` is the flattened gradient of
/// the i-th sample's NLL, and `layer_pairs[i]` keeps the backprop quantities
/// needed for the direct diagonal-Fisher formula.
#[derive(Debug, Clone)]
pub struct PerExampleGrads {
    rows: DMatrix<f64>,
    losses: Vec<f64>,
    layer_pairs: Option<Vec<Vec<LayerPair>>>,
}

impl PerExampleGrads {
    #[cfg(test)]
    pub(crate) fn from_parts(
        rows: DMatrix<f64>,
        losses: Vec<f64>,
        layer_pairs: Option<Vec<Vec<LayerPair>>>,
    ) -> Self {
        Self {
            rows,
            losses,
            layer_pairs,
        }
    }

    /// Wrap raw gradient rows (no retained activations); used for synthetic
    /// gradient sets in noise-sampling studies.
    pub fn from_rows(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(Self {
            rows,
            losses: Vec::new(),
            layer_pairs: None,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.rows.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    /// Mean per-sample loss, when computed from a network.
    pub fn mean_loss(&self) -> Option<f64> {
        if self.losses.is_empty() {
            None
        } else {
            Some(self.losses.iter().sum::<f64>() / self.losses.len() as f64)
        }
    }

    pub fn layer_pairs(&self) -> Option<&[Vec<LayerPair>]> {
        self.layer_pairs.as_deref()
    }

    /// Mean of the gradient rows; equals the batch-loss gradient exactly
    /// (summation sequential by sample index).
    pub fn mean_gradient(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.param_dim());
        for i in 0..self.num_samples() {
            for j in 0..self.param_dim() {
                mean[j] += self.rows[(i, j)];
            }
        }
        mean / self.num_samples() as f64
    }
}

/// Backprop one sample; returns (loss, per-layer gradients as LayerPairs).
fn backprop_sample(mlp: &Mlp, x: &DVector<f64>, label: usize) -> Result<(f64, Vec<LayerPair>)> {
    let (logits, cache) = mlp.forward(x)?;
    if label >= logits.len() {
        return Err(Error::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let loss = nll_loss(&logits, label)?;
    let layers = mlp.num_layers();
    let mut grads = vec![None; layers];
    // d(-log p)/dz_L = softmax(z_L) - e_label
    let mut g = softmax(&logits);
    g[label] -= 1.0;
    for l in (0..layers).rev() {
        grads[l] = Some(LayerPair {
            input: cache.activations[l].clone(),
            output_grad: g.clone(),
        });
        if l > 0 {
            let back = mlp.weights()[l].transpose() * &g;
            let z_prev = &cache.pre_activations[l - 1];
            g = DVector::from_fn(back.len(), |i, _| {
                back[i] * mlp.activation().derivative(z_prev[i])
            });
        }
    }
    Ok((loss, grads.into_iter().map(Option::unwrap).collect()))
}

/// Flatten per-layer outer products g a^T into a parameter-length row,
/// column-major within each layer.
fn flatten_pairs(mlp: &Mlp, pairs: &[LayerPair], out: &mut [f64]) {
    let mut offset = 0;
    for (w, pair) in mlp.weights().iter().zip(pairs) {
        let (rows, cols) = (w.nrows(), w.ncols());
        for c in 0..cols {
            let a = pair.input[c];
            for r in 0..rows {
                out[offset + c * rows + r] = pair.output_grad[r] * a;
            }
        }
        offset += rows * cols;
    }
}

/// Per-example NLL gradients for the whole batch, with retained (a, g)
/// pairs.
pub fn per_example_gradients(mlp: &Mlp, batch: &Batch) -> Result<PerExampleGrads> {
    let n = batch.len();
    let d = mlp.param_dim();
    let mut rows = DMatrix::zeros(n, d);
    let mut losses = Vec::with_capacity(n);
    let mut all_pairs = Vec::with_capacity(n);
    let mut scratch = vec![0.0; d];
    for i in 0..n {
        let (loss, pairs) = backprop_sample(mlp, &batch.input(i), batch.labels()[i])?;
        flatten_pairs(mlp, &pairs, &mut scratch);
        for (j, &v) in scratch.iter().enumerate() {
            rows[(i, j)] = v;
        }
        losses.push(loss);
        all_pairs.push(pairs);
    }
    Ok(PerExampleGrads {
        rows,
        losses,
        layer_pairs: Some(all_pairs),
    })
}

/// Mean loss and mean gradient over the batch, accumulated sample by sample
/// without materializing per-example rows.
pub fn batch_loss_and_gradient(mlp: &Mlp, batch: &Batch) -> Result<(f64, DVector<f64>)> {
    let n = batch.len();
    let d = mlp.param_dim();
    let mut grad = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut loss_sum = 0.0;
    for i in 0..n {
        let (loss, pairs) = backprop_sample(mlp, &batch.input(i), batch.labels()[i])?;
        flatten_pairs(mlp, &pairs, &mut scratch);
        for (g, &v) in grad.iter_mut().zip(scratch.iter()) {
            *g += v;
        }
        loss_sum += loss;
    }
    let inv = 1.0 / n as f64;
    Ok((
        loss_sum * inv,
        DVector::from_vec(grad.into_iter().map(|g| g * inv).collect()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_mlp(rng_seed: u64, dims: &[usize]) -> Mlp {
        let mut rng = Rng::new(rng_seed);
        Mlp::random(dims, Activation::Tanh, 1.0, &mut rng).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let mlp = Mlp::new(vec![DMatrix::zeros(3, 4)], Activation::Relu).unwrap();
        let (logits, _) = mlp.forward(&DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0])).unwrap();
        assert_eq!(logits, DVector::zeros(3));
        let p = softmax(&logits);
        for i in 0..3 {
            assert_relative_eq!(p[i], 1.0 / 3.0);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::new(vec![DMatrix::identity(3, 3)], Activation::Relu).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7, 2.0]);
        let (logits, _) = mlp.forward(&x).unwrap();
        assert_relative_eq!(logits, x);
    }

    #[test]
    fn forward_matches_brute_force() {
        // independent re-implementation with explicit loops
        let mlp = toy_mlp(3, &[4, 5, 3]);
        let x = DVector::from_vec(vec![0.2, -1.0, 0.5, 0.9]);
        let (logits, _) = mlp.forward(&x).unwrap();
        let w0 = &mlp.weights()[0];
        let w1 = &mlp.weights()[1];
        let mut z0 = [0.0; 5];
        for r in 0..5 {
            for c in 0..4 {
                z0[r] += w0[(r, c)] * x[c];
            }
        }
        let a0: Vec<f64> = z0.iter().map(|&v| v.tanh()).collect();
        let mut z1 = [0.0; 3];
        for r in 0..3 {
            for c in 0..5 {
                z1[r] += w1[(r, c)] * a0[c];
            }
        }
        for r in 0..3 {
            assert_relative_eq!(logits[r], z1[r], epsilon = 1e-12);
        }
    }

    #[test]
    fn nll_loss_values() {
        assert_relative_eq!(
            nll_loss(&DVector::zeros(3), 0).unwrap(),
            3.0f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            nll_loss(&DVector::zeros(2), 1).unwrap(),
            2.0f64.ln(),
            epsilon = 1e-12
        );
        let saturated = nll_loss(&DVector::from_vec(vec![1000.0, 0.0]), 0).unwrap();
        assert!((0.0..1e-12).contains(&saturated));
        // stays finite for huge logits
        let big = nll_loss(&DVector::from_vec(vec![1e4, -1e4, 0.0]), 1).unwrap();
        assert!(big.is_finite());
        assert!(nll_loss(&DVector::zeros(2), 5).is_err());
    }

    #[test]
    fn flatten_round_trips_bit_exactly() {
        let mlp = toy_mlp(11, &[3, 4, 2]);
        assert_eq!(mlp.param_dim(), 3 * 4 + 4 * 2);
        let flat = mlp.flatten();
        let rebuilt = mlp.with_flat(&flat).unwrap();
        for (a, b) in mlp.weights().iter().zip(rebuilt.weights()) {
            assert_eq!(a, b);
        }
        let zeroed = mlp.with_flat(&DVector::zeros(mlp.param_dim())).unwrap();
        assert!(zeroed.weights().iter().all(|w| w.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn flatten_is_column_major_per_layer() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        let mlp = Mlp::new(vec![w], Activation::Relu).unwrap();
        assert_eq!(mlp.flatten().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_layer_gradient_is_outer_product() {
        // one linear layer, a = (1, 2), forced g by choosing the label
        let mlp = Mlp::new(vec![DMatrix::zeros(1, 2)], Activation::Relu).unwrap();
        // one output class: softmax is identically 1, loss 0, g = 0
        let batch = Batch::new(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), vec![0]).unwrap();
        let grads = per_example_gradients(&mlp, &batch).unwrap();
        assert_eq!(grads.row(0), DVector::zeros(2));
        // two outputs, zero weights: softmax = (1/2, 1/2), g = (-1/2, 1/2) for label 0
        let mlp2 = Mlp::new(vec![DMatrix::zeros(2, 2)], Activation::Relu).unwrap();
        let grads2 = per_example_gradients(&mlp2, &batch).unwrap();
        // row = vec(g a^T) column-major = (g*1, g*2) blocks
        let expect = DVector::from_vec(vec![-0.5, 0.5, -1.0, 1.0]);
        assert_relative_eq!(grads2.row(0), expect, epsilon = 1e-12);
    }

    #[test]
    fn per_example_mean_equals_batch_gradient() {
        let mlp = toy_mlp(5, &[3, 6, 3]);
        let mut rng = Rng::new(8);
        let inputs = DMatrix::from_fn(7, 3, |_, _| rng.next_gaussian());
        let labels = (0..7).map(|i| i % 3).collect();
        let batch = Batch::new(inputs, labels).unwrap();
        let grads = per_example_gradients(&mlp, &batch).unwrap();
        let (loss, batch_grad) = batch_loss_and_gradient(&mlp, &batch).unwrap();
        assert!((grads.mean_gradient() - &batch_grad).norm() <= 1e-10);
        assert_relative_eq!(grads.mean_loss().unwrap(), loss, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for trial in 0..20 {
            let mlp = toy_mlp(100 + trial, &[3, 5, 4, 2]);
            let mut rng = Rng::new(200 + trial);
            let x = rng.standard_normal_vector(3);
            let label = (trial % 2) as usize;
            let batch = Batch::new(
                DMatrix::from_row_slice(1, 3, x.as_slice()),
                vec![label],
            )
            .unwrap();
            let grads = per_example_gradients(&mlp, &batch).unwrap();
            let analytic = grads.row(0);
            let theta = mlp.flatten();
            let h = 1e-5;
            let d = mlp.param_dim();
            // spot-check a third of the coordinates
            for j in (0..d).step_by(3) {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[j] += h;
                minus[j] -= h;
                let lp = {
                    let (logits, _) = mlp.with_flat(&plus).unwrap().forward(&x).unwrap();
                    nll_loss(&logits, label).unwrap()
                };
                let lm = {
                    let (logits, _) = mlp.with_flat(&minus).unwrap().forward(&x).unwrap();
                    nll_loss(&logits, label).unwrap()
                };
                let fd = (lp - lm) / (2.0 * h);
                let denom = analytic[j].abs().max(1e-3);
                assert!(
                    (analytic[j] - fd).abs() / denom < 1e-4,
                    "trial {trial} coord {j}: analytic {} vs fd {fd}",
                    analytic[j]
                );
            }
        }
    }

    #[test]
    fn shape_errors_reported() {
        assert!(Mlp::new(
            vec![DMatrix::zeros(3, 2), DMatrix::zeros(2, 4)],
            Activation::Relu
        )
        .is_err());
        let mlp = toy_mlp(1, &[3, 2]);
        assert!(mlp.forward(&DVector::zeros(4)).is_err());
    }
}
