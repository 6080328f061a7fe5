//! The perturbed gradient-descent loop over quadratic problems and MLPs:
//! theta_{k+1} = theta_k - alpha_k grad + alpha_k C(theta_k) xi_k,
//! with per-regime noise construction, optional noise termination, and
//! trajectory logging.

use nalgebra::DVector;

use crate::covariance::{BatchScale, CovarianceSpec, Rng};
use crate::error::{Error, Result};
use crate::fisher;
use crate::network::{per_example_gradients, Batch, Mlp};
use crate::quadratic::{QuadraticProblem, StepSchedule};

/// Loss values beyond this abort the run as diverged.
const DIVERGENCE_GUARD: f64 = 1e12;

/// Which noise enters the update.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    /// Plain gradient descent; consumes no randomness.
    None,
    /// A fixed covariance spec, sampled fresh every step.
    Fixed(CovarianceSpec),
    /// s * sqrt(F(theta_k)) xi with F the uncentered empirical Fisher of the
    /// current per-example gradients.
    FisherFull(BatchScale),
    /// s * sqrt(diag F(theta_k)) xi.
    FisherDiag(BatchScale),
    /// Sign-weighted gradient sum; covariance s^2 F without any matrix.
    FisherRademacher(BatchScale),
    /// Isotropic with per-coordinate variance s^2 Tr(F)/d.
    FisherTrace(BatchScale),
    /// Labels resampled from the predictive distribution.
    TrueFisher(BatchScale),
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Fixed(_) => "fixed",
            Self::FisherFull(_) => "fisher_full",
            Self::FisherDiag(_) => "fisher_diag",
            Self::FisherRademacher(_) => "fisher_rademacher",
            Self::FisherTrace(_) => "fisher_trace",
            Self::TrueFisher(_) => "true_fisher",
        }
    }

    fn needs_per_example(&self) -> bool {
        matches!(
            self,
            Self::FisherFull(_) | Self::FisherDiag(_) | Self::FisherRademacher(_) | Self::FisherTrace(_)
        )
    }
}

/// Noise regime: a kind plus the fraction of the run after which the noise
/// is switched off (injecting only during the early transient phase is what
/// works best in practice; a quarter is the usual choice).
#[derive(Debug, Clone)]
pub struct NoiseRegime {
    kind: NoiseKind,
    termination_fraction: f64,
}

impl NoiseRegime {
    pub const DEFAULT_TERMINATION: f64 = 0.25;

    /// Noise active for the first `DEFAULT_TERMINATION` of the run.
    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            termination_fraction: Self::DEFAULT_TERMINATION,
        }
    }

    /// Noise active for the first `fraction` of the run (1.0 = never off).
    pub fn with_termination(kind: NoiseKind, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::BadParams(format!(
                "termination_fraction {fraction} outside [0, 1]"
            )));
        }
        Ok(Self {
            kind,
            termination_fraction: fraction,
        })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn termination_fraction(&self) -> f64 {
        self.termination_fraction
    }

    /// Last step (1-based) at which noise is injected: ceil(fraction * K).
    pub fn last_noisy_step(&self, total_steps: u64) -> u64 {
        (self.termination_fraction * total_steps as f64).ceil() as u64
    }
}

/// Run parameters shared by both drivers.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub steps: u64,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub log_every: u64,
    pub record_params: bool,
    /// For MLP runs: draw a fresh gradient subsample of this size each step
    /// instead of the full dataset.
    pub grad_batch_size: Option<usize>,
}

impl RunConfig {
    pub fn new(steps: u64, schedule: StepSchedule, seed: u64) -> Result<Self> {
        if steps < 1 {
            return Err(Error::BadParams("steps must be >= 1".into()));
        }
        Ok(Self {
            steps,
            schedule,
            seed,
            log_every: 1,
            record_params: false,
            grad_batch_size: None,
        })
    }

    pub fn log_every(mut self, every: u64) -> Result<Self> {
        if every < 1 {
            return Err(Error::BadParams("log_every must be >= 1".into()));
        }
        self.log_every = every;
        Ok(self)
    }

    pub fn record_params(mut self, yes: bool) -> Self {
        self.record_params = yes;
        self
    }
}

/// One logged iterate. `loss` and `grad_norm` describe the current iterate;
/// `alpha` and `noise_norm` describe the update that produced it (zero in
/// the step-0 row).
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub step: u64,
    pub alpha: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub noise_norm: f64,
    pub params: Option<DVector<f64>>,
}

/// Per-iteration record of a run.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    /// Smallest logged step with loss <= eps; `None` when never reached.
    pub fn iterations_to_epsilon(&self, eps: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.loss <= eps).map(|r| r.step)
    }
}

/// Smallest logged step with loss <= eps.
pub fn iterations_to_epsilon(log: &TrajectoryLog, eps: f64) -> Option<u64> {
    log.iterations_to_epsilon(eps)
}

/// One perturbed update: theta - alpha * grad + alpha * noise.
pub fn pgd_step(
    theta: &DVector<f64>,
    grad: &DVector<f64>,
    alpha: f64,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    if grad.len() != theta.len() {
        return Err(Error::DimMismatch {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    if noise.len() != theta.len() {
        return Err(Error::DimMismatch {
            expected: theta.len(),
            got: noise.len(),
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidStepSize(alpha));
    }
    Ok(theta - grad * alpha + noise * alpha)
}

fn should_log(k: u64, total: u64, every: u64) -> bool {
    k == total || k.is_multiple_of(every)
}

/// Run perturbed gradient descent on a quadratic with exact gradients and a
/// fixed covariance spec. The k-th update (k = 1..K) uses alpha_k from the
/// schedule; noise is sampled fresh each step.
pub fn run_quadratic(
    problem: &QuadraticProblem,
    spec: &CovarianceSpec,
    cfg: &RunConfig,
    theta0: &DVector<f64>,
) -> Result<TrajectoryLog> {
    if spec.dim() != problem.dim() {
        return Err(Error::DimMismatch {
            expected: problem.dim(),
            got: spec.dim(),
        });
    }
    let mut rng = Rng::new(cfg.seed);
    let mut theta = theta0.clone();
    let mut log = TrajectoryLog::default();
    let mut grad = problem.gradient(&theta)?;
    log.rows.push(TrajectoryRow {
        step: 0,
        alpha: 0.0,
        loss: problem.loss(&theta)?,
        grad_norm: grad.norm(),
        noise_norm: 0.0,
        params: cfg.record_params.then(|| theta.clone()),
    });
    for k in 1..=cfg.steps {
        let alpha = cfg.schedule.alpha(k);
        let noise = spec.sample(&mut rng);
        theta = pgd_step(&theta, &grad, alpha, &noise)?;
        grad = problem.gradient(&theta)?;
        if should_log(k, cfg.steps, cfg.log_every) {
            log.rows.push(TrajectoryRow {
                step: k,
                alpha,
                loss: problem.loss(&theta)?,
                grad_norm: grad.norm(),
                noise_norm: noise.norm(),
                params: cfg.record_params.then(|| theta.clone()),
            });
        }
    }
    Ok(log)
}

/// Build the regime's noise vector from the current per-example gradients.
/// Draw order per step is fixed: gradient subsample first (when enabled),
/// then the noise draw.
fn regime_noise(
    kind: &NoiseKind,
    mlp: &Mlp,
    batch: &Batch,
    grads: Option<&crate::network::PerExampleGrads>,
    rng: &mut Rng,
) -> Result<DVector<f64>> {
    let d = mlp.param_dim();
    Ok(match kind {
        NoiseKind::None => DVector::zeros(d),
        NoiseKind::Fixed(spec) => {
            if spec.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: spec.dim(),
                });
            }
            spec.sample(rng)
        }
        NoiseKind::FisherFull(bs) => {
            let grads = grads.expect("per-example grads required");
            let full = fisher::EmpiricalFisherFull::from_grads(grads)?;
            let spec = CovarianceSpec::from_matrix(full.matrix() * bs.scale_factor().powi(2))?;
            spec.sample(rng)
        }
        NoiseKind::FisherDiag(bs) => {
            let grads = grads.expect("per-example grads required");
            let diag = fisher::fisher_diagonal_direct(grads)?;
            let spec =
                CovarianceSpec::from_diagonal(diag.values() * bs.scale_factor().powi(2))?;
            spec.sample(rng)
        }
        NoiseKind::FisherRademacher(bs) => {
            let grads = grads.expect("per-example grads required");
            fisher::rademacher_fisher_noise(grads, rng)? * bs.scale_factor()
        }
        NoiseKind::FisherTrace(bs) => {
            let grads = grads.expect("per-example grads required");
            let diag = fisher::fisher_diagonal_direct(grads)?;
            let spec = CovarianceSpec::trace_isotropic_from_diag(
                &(diag.values() * bs.scale_factor().powi(2)),
            )?;
            spec.sample(rng)
        }
        NoiseKind::TrueFisher(bs) => {
            let inputs: Vec<DVector<f64>> = (0..batch.len()).map(|i| batch.input(i)).collect();
            fisher::true_fisher_noise(mlp, &inputs, rng)? * bs.scale_factor()
        }
    })
}

/// Run the noisy training loop on an MLP. Each step computes the gradient
/// over the full dataset (or a fresh subsample), rebuilds the regime's noise
/// from the same batch's per-example gradients, and applies the update.
/// After `regime.last_noisy_step(K)` the noise is forced to zero.
///
/// Aborts with `NonFiniteLoss` (carrying the partial log, last row being the
/// diagnostic) when the loss leaves the finite range.
pub fn run_mlp(
    mlp0: &Mlp,
    data: &Batch,
    regime: &NoiseRegime,
    cfg: &RunConfig,
) -> Result<TrajectoryLog> {
    let mut mlp = mlp0.clone();
    let mut rng = Rng::new(cfg.seed);
    let mut theta = mlp.flatten();
    let mut log = TrajectoryLog::default();
    let last_noisy = regime.last_noisy_step(cfg.steps);
    if let Some(m) = cfg.grad_batch_size {
        if m == 0 || m > data.len() {
            return Err(Error::BadBatchSize {
                batch_size: m,
                available: data.len(),
            });
        }
    }

    let full_batch = cfg.grad_batch_size.is_none();
    let eval = |mlp: &Mlp,
                batch: &Batch,
                needs_rows: bool|
     -> Result<(f64, DVector<f64>, Option<crate::network::PerExampleGrads>)> {
        if needs_rows {
            let grads = per_example_gradients(mlp, batch)?;
            let loss = grads.mean_loss().expect("losses retained");
            let mean = grads.mean_gradient();
            Ok((loss, mean, Some(grads)))
        } else {
            let (loss, grad) = crate::network::batch_loss_and_gradient(mlp, batch)?;
            Ok((loss, grad, None))
        }
    };
    let diverged = |loss: f64| !loss.is_finite() || loss > DIVERGENCE_GUARD;

    // (alpha, noise_norm) of the update that produced the current iterate
    let mut pending = (0.0f64, 0.0f64);
    for k in 0..=cfg.steps {
        let step = k + 1; // index of the update leaving this iterate
        let noisy =
            k < cfg.steps && step <= last_noisy && !matches!(regime.kind(), NoiseKind::None);
        let needs_rows = noisy && regime.kind().needs_per_example();
        let logged = should_log(k, cfg.steps, cfg.log_every);

        // draw order per step: subsample indices first, then the noise draw
        let step_batch = if k == cfg.steps || full_batch {
            None
        } else {
            let m = cfg.grad_batch_size.unwrap();
            Some(data.subset(&rng.sample_without_replacement(data.len(), m))?)
        };

        // evaluate at the current iterate; the same evaluation drives the
        // update in full-batch mode
        let mut row_loss = f64::NAN;
        let mut row_grad_norm = f64::NAN;
        let mut update = None;
        if k < cfg.steps {
            let batch = step_batch.as_ref().unwrap_or(data);
            let (loss, grad, grads) = eval(&mlp, batch, needs_rows)?;
            if full_batch {
                row_loss = loss;
                row_grad_norm = grad.norm();
            }
            if diverged(loss) {
                log.rows.push(TrajectoryRow {
                    step: k,
                    alpha: pending.0,
                    loss,
                    grad_norm: grad.norm(),
                    noise_norm: pending.1,
                    params: cfg.record_params.then(|| theta.clone()),
                });
                return Err(Error::NonFiniteLoss {
                    step: k,
                    log: Box::new(log),
                });
            }
            update = Some((grad, grads));
        }
        if logged && row_loss.is_nan() {
            let (loss, grad, _) = eval(&mlp, data, false)?;
            row_loss = loss;
            row_grad_norm = grad.norm();
            if diverged(loss) {
                log.rows.push(TrajectoryRow {
                    step: k,
                    alpha: pending.0,
                    loss,
                    grad_norm: row_grad_norm,
                    noise_norm: pending.1,
                    params: cfg.record_params.then(|| theta.clone()),
                });
                return Err(Error::NonFiniteLoss {
                    step: k,
                    log: Box::new(log),
                });
            }
        }
        if logged {
            log.rows.push(TrajectoryRow {
                step: k,
                alpha: pending.0,
                loss: row_loss,
                grad_norm: row_grad_norm,
                noise_norm: pending.1,
                params: cfg.record_params.then(|| theta.clone()),
            });
        }
        if k == cfg.steps {
            break;
        }

        let (grad, grads) = update.expect("update evaluation present before the last step");
        let noise = if noisy {
            let batch = step_batch.as_ref().unwrap_or(data);
            regime_noise(regime.kind(), &mlp, batch, grads.as_ref(), &mut rng)?
        } else {
            DVector::zeros(theta.len())
        };
        let alpha = cfg.schedule.alpha(step);
        theta = pgd_step(&theta, &grad, alpha, &noise)?;
        mlp.set_flat(&theta)?;
        pending = (alpha, noise.norm());
    }
    Ok(log)
}
