//! Experiment configuration: strict JSON parsing (unknown keys rejected)
//! plus semantic validation that names the offending field.

use serde::Deserialize;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{BatchScale, CovarianceSpec, Rng};
use crate::error::{Error, Result};
use crate::network::Activation;
use crate::optimizer::{NoiseKind, NoiseRegime};
use crate::quadratic::{QuadraticProblem, StepSchedule};

use super::data::random_pd_matrix;

/// Parsed and validated experiment description.
#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    Quadratic(QuadraticConfig),
    Toy2d(Toy2dConfig),
    Train(TrainConfig),
    Diagnose(DiagnoseConfig),
    Stability(StabilityConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Quadratic(_) => "quadratic",
            Self::Toy2d(_) => "toy2d",
            Self::Train(_) => "train",
            Self::Diagnose(_) => "diagnose",
            Self::Stability(_) => "stability",
        }
    }

    pub fn seeds(&self) -> &[u64] {
        match self {
            Self::Quadratic(c) => &c.seeds,
            Self::Toy2d(c) => &c.seeds,
            Self::Train(c) => &c.seeds,
            Self::Diagnose(c) => &c.seeds,
            Self::Stability(c) => &c.seeds,
        }
    }

    pub fn set_seeds(&mut self, seeds: Vec<u64>) {
        match self {
            Self::Quadratic(c) => c.seeds = seeds,
            Self::Toy2d(c) => c.seeds = seeds,
            Self::Train(c) => c.seeds = seeds,
            Self::Diagnose(c) => c.seeds = seeds,
            Self::Stability(c) => c.seeds = seeds,
        }
    }

    pub fn out_dir(&self) -> Option<&str> {
        match self {
            Self::Quadratic(c) => c.out_dir.as_deref(),
            Self::Toy2d(c) => c.out_dir.as_deref(),
            Self::Train(c) => c.out_dir.as_deref(),
            Self::Diagnose(c) => c.out_dir.as_deref(),
            Self::Stability(c) => c.out_dir.as_deref(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ValidationError {
        field: field.into(),
        reason: reason.into(),
    }
}

fn default_log_every() -> u64 {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_termination() -> f64 {
    NoiseRegime::DEFAULT_TERMINATION
}

/// A matrix either given row by row or generated PD with a fixed spectrum
/// range.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Explicit { rows: Vec<Vec<f64>> },
    RandomPd { dim: usize, eig_min: f64, eig_max: f64, seed: u64 },
}

impl MatrixSpec {
    pub fn build(&self) -> Result<DMatrix<f64>> {
        match self {
            Self::Explicit { rows } => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
                    return Err(invalid("matrix.rows", "ragged or empty matrix"));
                }
                let cols = rows[0].len();
                Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
            }
            Self::RandomPd {
                dim,
                eig_min,
                eig_max,
                seed,
            } => {
                if *dim == 0 {
                    return Err(invalid("matrix.dim", "dimension must be positive"));
                }
                if !(*eig_min > 0.0) || eig_max < eig_min {
                    return Err(invalid("matrix.eig_min", "need 0 < eig_min <= eig_max"));
                }
                Ok(random_pd_matrix(*dim, *eig_min, *eig_max, &mut Rng::new(*seed)))
            }
        }
    }
}

/// Noise choice for quadratic/toy2d suites, resolved against the problem's A.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadraticNoise {
    Zero,
    /// C = sigma I.
    Isotropic { sigma: f64 },
    /// C = sqrt(A).
    SqrtA,
    /// C = sqrt(diag A).
    SqrtDiagA,
    /// C = sqrt(Tr(A)/d) I.
    TraceAIsotropic,
    Explicit { rows: Vec<Vec<f64>> },
}

impl QuadraticNoise {
    pub fn label(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Isotropic { sigma } => format!("isotropic{sigma}"),
            Self::SqrtA => "sqrt_a".into(),
            Self::SqrtDiagA => "sqrt_diag_a".into(),
            Self::TraceAIsotropic => "trace_a_isotropic".into(),
            Self::Explicit { .. } => "explicit".into(),
        }
    }

    pub fn build(&self, problem: &QuadraticProblem) -> Result<CovarianceSpec> {
        let d = problem.dim();
        Ok(match self {
            Self::Zero => CovarianceSpec::zero(d),
            Self::Isotropic { sigma } => CovarianceSpec::isotropic(*sigma, d)?,
            Self::SqrtA => CovarianceSpec::from_matrix(problem.matrix().clone())?,
            Self::SqrtDiagA => CovarianceSpec::from_diagonal(problem.matrix().diagonal())?,
            Self::TraceAIsotropic => {
                CovarianceSpec::trace_isotropic_from_diag(&problem.matrix().diagonal())?
            }
            Self::Explicit { rows } => {
                let m = MatrixSpec::Explicit { rows: rows.clone() }.build()?;
                if m.nrows() != d {
                    return Err(invalid("noise.rows", format!("expected {d}x{d} matrix")));
                }
                CovarianceSpec::explicit(m)?
            }
        })
    }
}

/// Step-size schedule description.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant { alpha: f64 },
    /// gamma given directly; lambda_min comes from the quadratic problem.
    /// Network training has no lambda_min, so there the decay is plain
    /// 2/(k + gamma).
    TheoremDecay { gamma: f64 },
    /// gamma derived from the initial-step cap (quadratic suites only).
    TheoremDecayAlpha0 { alpha0: f64 },
}

impl ScheduleConfig {
    pub fn build(&self, lambda_min: f64) -> Result<StepSchedule> {
        match self {
            Self::Constant { alpha } => StepSchedule::constant(*alpha),
            Self::TheoremDecay { gamma } => StepSchedule::theorem_decay(*gamma, lambda_min),
            Self::TheoremDecayAlpha0 { alpha0 } => {
                StepSchedule::theorem_decay_from_alpha0(*alpha0, lambda_min)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub matrix: MatrixSpec,
    pub noise: Vec<QuadraticNoise>,
    pub schedule: ScheduleConfig,
    pub theta0: Vec<f64>,
    pub steps: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Epsilon grid for the iterations-to-threshold summary.
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl QuadraticConfig {
    pub fn theta0_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.theta0.clone())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toy2dConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub n: usize,
    pub noise_sd: f64,
    pub data_seed: u64,
    pub noise: Vec<QuadraticNoise>,
    pub alpha: f64,
    pub steps: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    pub theta0: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Data source for network experiments.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Blobs {
        n: usize,
        in_dim: usize,
        classes: usize,
        spread: f64,
        seed: u64,
    },
    Idx {
        images: String,
        labels: String,
        /// Keep only the first `limit` samples when set.
        #[serde(default)]
        limit: Option<usize>,
    },
}

impl DataConfig {
    pub fn load(&self) -> Result<super::data::Dataset> {
        match self {
            Self::Blobs {
                n,
                in_dim,
                classes,
                spread,
                seed,
            } => super::data::gen_blobs(*n, *in_dim, *classes, *spread, *seed),
            Self::Idx {
                images,
                labels,
                limit,
            } => {
                let ds = super::idx::load_idx(images.as_ref(), labels.as_ref())?;
                match limit {
                    Some(l) => {
                        let l = (*l).min(ds.len());
                        if l == 0 {
                            return Err(invalid("data.limit", "limit must keep at least one sample"));
                        }
                        let idx: Vec<usize> = (0..l).collect();
                        let batch = ds.batch().subset(&idx)?;
                        Ok(super::data::Dataset::new(
                            batch,
                            ds.name().to_string(),
                            ds.digest().map(str::to_string),
                        ))
                    }
                    None => Ok(ds),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: String,
    pub init_scale: f64,
    pub init_seed: u64,
}

impl MlpConfig {
    pub fn activation(&self) -> Result<Activation> {
        match self.activation.as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(invalid("mlp.activation", format!("unknown activation `{other}`"))),
        }
    }

    pub fn build(&self, in_dim: usize, classes: usize) -> Result<crate::network::Mlp> {
        self.build_with_offset(in_dim, classes, 0)
    }

    /// Replicate initialization: the network is drawn from
    /// `init_seed + offset` so every replicate seed trains a different
    /// random network.
    pub fn build_with_offset(
        &self,
        in_dim: usize,
        classes: usize,
        offset: u64,
    ) -> Result<crate::network::Mlp> {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(classes);
        let mut rng = Rng::new(self.init_seed.wrapping_add(offset));
        crate::network::Mlp::random(&dims, self.activation()?, self.init_scale, &mut rng)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub kind: String,
    #[serde(default)]
    pub m_large: Option<usize>,
    #[serde(default)]
    pub m_small: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_termination")]
    pub termination_fraction: f64,
    /// Variance studies only: draw batches of the configured small size
    /// instead of the full dataset.
    #[serde(default)]
    pub small_batch: bool,
}

impl RegimeConfig {
    fn batch_scale(&self, default_large: usize) -> Result<BatchScale> {
        let m_large = self.m_large.unwrap_or(default_large);
        let m_small = self
            .m_small
            .ok_or_else(|| invalid("regime.m_small", "required for Fisher regimes"))?;
        BatchScale::new(m_large, m_small)
    }

    /// `param_dim` sizes fixed isotropic specs; `dataset_len` is the default
    /// large-batch size.
    pub fn build(&self, param_dim: usize, dataset_len: usize) -> Result<NoiseRegime> {
        let kind = match self.kind.as_str() {
            "none" => NoiseKind::None,
            "isotropic" => {
                let sigma = self
                    .sigma
                    .ok_or_else(|| invalid("regime.sigma", "required for isotropic noise"))?;
                NoiseKind::Fixed(CovarianceSpec::isotropic(sigma, param_dim)?)
            }
            "fisher_full" => NoiseKind::FisherFull(self.batch_scale(dataset_len)?),
            "fisher_diag" => NoiseKind::FisherDiag(self.batch_scale(dataset_len)?),
            "fisher_rademacher" => NoiseKind::FisherRademacher(self.batch_scale(dataset_len)?),
            "fisher_trace" => NoiseKind::FisherTrace(self.batch_scale(dataset_len)?),
            "true_fisher" => NoiseKind::TrueFisher(self.batch_scale(dataset_len)?),
            other => return Err(invalid("regime.kind", format!("unknown regime `{other}`"))),
        };
        NoiseRegime::with_termination(kind, self.termination_fraction)
    }

    pub fn label(&self) -> String {
        self.kind.clone()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub data: DataConfig,
    pub mlp: MlpConfig,
    pub regimes: Vec<RegimeConfig>,
    pub schedule: ScheduleConfig,
    pub steps: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Training-loss thresholds for the steps-to-threshold summary.
    #[serde(default)]
    pub loss_thresholds: Vec<f64>,
    /// Gradient subsample size per step; full dataset when absent.
    #[serde(default)]
    pub grad_batch_size: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub batch_size: usize,
    pub draws: usize,
    pub regimes: Vec<RegimeConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub data: DataConfig,
    pub mlp: MlpConfig,
    pub pretrain: PretrainConfig,
    /// Record Frobenius norms every this many pretraining steps.
    pub frobenius_every: u64,
    pub variance: VarianceConfig,
    pub eigen: EigenConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Diffusion choice for a stability system.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    SqrtA,
    SqrtDiagA,
    Identity,
    Explicit { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuConfig {
    pub matrix: MatrixSpec,
    pub diffusion: DiffusionConfig,
    pub alpha: f64,
    pub theta0: Vec<f64>,
}

impl OuConfig {
    pub fn build(&self) -> Result<crate::stability::OuSystem> {
        let a = self.matrix.build()?;
        let problem_check = QuadraticProblem::new(a.clone())?;
        let c = match &self.diffusion {
            DiffusionConfig::SqrtA => crate::covariance::matrix_sqrt(&a)?,
            DiffusionConfig::SqrtDiagA => DMatrix::from_diagonal(&a.diagonal().map(f64::sqrt)),
            DiffusionConfig::Identity => DMatrix::identity(a.nrows(), a.ncols()),
            DiffusionConfig::Explicit { rows } => {
                let m = MatrixSpec::Explicit { rows: rows.clone() }.build()?;
                if m.nrows() != problem_check.dim() {
                    return Err(invalid("diffusion.rows", "dimension mismatch with matrix"));
                }
                m
            }
        };
        crate::stability::OuSystem::new(a, c, self.alpha, DVector::from_vec(self.theta0.clone()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub system_a: OuConfig,
    pub system_b: OuConfig,
    pub t_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
struct KindProbe {
    experiment: String,
}

/// Strict deserialization that reports the path of the offending field.
fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        if inner.is_syntax() || inner.is_eof() {
            return Error::ParseError(inner.to_string());
        }
        let path = e.path().to_string();
        let msg = inner.to_string();
        // unknown-field errors report the parent path; the message carries
        // the name
        let field = if path == "." {
            msg.split('`').nth(1).unwrap_or("document").to_string()
        } else {
            path
        };
        Error::ValidationError { field, reason: msg }
    })
}

/// Parse and validate a JSON experiment document. Syntax problems surface as
/// `ParseError` with line/column info; unknown or malformed fields as
/// `ValidationError` naming the field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let probe: KindProbe = from_json_str(text)?;
    let config = match probe.experiment.as_str() {
        "quadratic" => ExperimentConfig::Quadratic(from_json_str(text)?),
        "toy2d" => ExperimentConfig::Toy2d(from_json_str(text)?),
        "train" => ExperimentConfig::Train(from_json_str(text)?),
        "diagnose" => ExperimentConfig::Diagnose(from_json_str(text)?),
        "stability" => ExperimentConfig::Stability(from_json_str(text)?),
        other => {
            return Err(invalid(
                "experiment",
                format!("unknown experiment kind `{other}`"),
            ))
        }
    };
    validate(&config)?;
    Ok(config)
}

fn check_common(steps: u64, log_every: u64, seeds: &[u64]) -> Result<()> {
    if steps < 1 {
        return Err(invalid("steps", "must be >= 1"));
    }
    if log_every < 1 {
        return Err(invalid("log_every", "must be >= 1"));
    }
    if seeds.is_empty() {
        return Err(invalid("seeds", "must be nonempty"));
    }
    Ok(())
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    match config {
        ExperimentConfig::Quadratic(c) => {
            check_common(c.steps, c.log_every, &c.seeds)?;
            if c.noise.is_empty() {
                return Err(invalid("noise", "need at least one noise spec"));
            }
            let a = c.matrix.build()?;
            if c.theta0.len() != a.nrows() {
                return Err(invalid("theta0", "dimension mismatch with matrix"));
            }
            if c.eps_grid.iter().any(|&e| !(e > 0.0)) {
                return Err(invalid("eps_grid", "thresholds must be positive"));
            }
            let problem = QuadraticProblem::new(a)?;
            c.schedule.build(problem.lambda_min())?;
            for n in &c.noise {
                n.build(&problem)?;
            }
        }
        ExperimentConfig::Toy2d(c) => {
            check_common(c.steps, c.log_every, &c.seeds)?;
            if c.noise.is_empty() {
                return Err(invalid("noise", "need at least one noise spec"));
            }
            if c.theta0.len() != 2 {
                return Err(invalid("theta0", "toy2d parameters are two-dimensional"));
            }
            if !(c.alpha > 0.0) {
                return Err(invalid("alpha", "step size must be positive"));
            }
            let (_, problem) = super::data::gen_toy_2d(c.n, c.noise_sd, c.data_seed)?;
            for n in &c.noise {
                n.build(&problem)?;
            }
        }
        ExperimentConfig::Train(c) => {
            check_common(c.steps, c.log_every, &c.seeds)?;
            if c.regimes.is_empty() {
                return Err(invalid("regimes", "need at least one regime"));
            }
            if c.loss_thresholds.iter().any(|&t| !(t > 0.0)) {
                return Err(invalid("loss_thresholds", "thresholds must be positive"));
            }
            let data = c.data.load()?;
            let classes = data.batch().labels().iter().max().map_or(1, |m| m + 1);
            let mlp = c.mlp.build(data.batch().inputs().ncols(), classes)?;
            if let Some(m) = c.grad_batch_size {
                if m == 0 || m > data.len() {
                    return Err(invalid("grad_batch_size", "outside [1, dataset size]"));
                }
            }
            for r in &c.regimes {
                r.build(mlp.param_dim(), data.len())?;
            }
            // constant or decaying both are allowed; lambda_min is not
            // meaningful for MLPs, so theorem schedules need explicit gamma
            match &c.schedule {
                ScheduleConfig::Constant { .. } => {
                    c.schedule.build(1.0)?;
                }
                ScheduleConfig::TheoremDecay { .. } => {
                    c.schedule.build(1.0)?;
                }
                ScheduleConfig::TheoremDecayAlpha0 { .. } => {
                    return Err(invalid(
                        "schedule",
                        "alpha0-derived schedules need a quadratic problem",
                    ));
                }
            }
        }
        ExperimentConfig::Diagnose(c) => {
            check_common(c.pretrain.steps, c.frobenius_every, &c.seeds)?;
            if !(c.pretrain.alpha > 0.0) {
                return Err(invalid("pretrain.alpha", "step size must be positive"));
            }
            if c.variance.draws < 2 {
                return Err(invalid("variance.draws", "need at least two draws"));
            }
            let data = c.data.load()?;
            if c.variance.batch_size == 0 || c.variance.batch_size > data.len() {
                return Err(invalid("variance.batch_size", "outside [1, dataset size]"));
            }
            let classes = data.batch().labels().iter().max().map_or(1, |m| m + 1);
            let mlp = c.mlp.build(data.batch().inputs().ncols(), classes)?;
            for r in &c.variance.regimes {
                r.build(mlp.param_dim(), data.len())?;
            }
            if c.eigen.max_iters == 0 {
                return Err(invalid("eigen.max_iters", "must be >= 1"));
            }
            if !(c.eigen.tol > 0.0) {
                return Err(invalid("eigen.tol", "must be positive"));
            }
        }
        ExperimentConfig::Stability(c) => {
            if c.seeds.is_empty() {
                return Err(invalid("seeds", "must be nonempty"));
            }
            let a = c.system_a.build()?;
            let b = c.system_b.build()?;
            if a.dim() != b.dim() {
                return Err(invalid("system_b", "dimension mismatch with system_a"));
            }
            if c.t_grid.is_empty() || c.t_grid.iter().any(|&t| t < 0.0) {
                return Err(invalid("t_grid", "need nonempty, nonnegative times"));
            }
            if c.lambda_grid.is_empty() || c.lambda_grid.iter().any(|&l| !(l > 0.0)) {
                return Err(invalid("lambda_grid", "need nonempty, positive scales"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_QUADRATIC: &str = r#"{
        "experiment": "quadratic",
        "matrix": {"kind": "explicit", "rows": [[2.0, 1.0], [1.0, 2.0]]},
        "noise": [{"kind": "sqrt_a"}, {"kind": "sqrt_diag_a"}],
        "schedule": {"kind": "theorem_decay", "gamma": 10.0},
        "theta0": [1.4, -1.4],
        "steps": 100,
        "seeds": [0, 1]
    }"#;

    #[test]
    fn minimal_template_parses() {
        let cfg = parse_config(MINIMAL_QUADRATIC).unwrap();
        assert_eq!(cfg.kind(), "quadratic");
        assert_eq!(cfg.seeds(), &[0, 1]);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL_QUADRATIC.replace("\"steps\": 100", "\"steps\": 100, \"momentum\": 0.9");
        match parse_config(&text) {
            Err(Error::ValidationError { field, .. }) => assert_eq!(field, "momentum"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn negative_steps_rejected_naming_field() {
        let text = MINIMAL_QUADRATIC.replace("\"steps\": 100", "\"steps\": -5");
        match parse_config(&text) {
            Err(Error::ValidationError { field, .. }) => assert_eq!(field, "steps"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let text = MINIMAL_QUADRATIC.replace("\"steps\": 100", "\"steps\": 0");
        match parse_config(&text) {
            Err(Error::ValidationError { field, .. }) => assert_eq!(field, "steps"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_location() {
        match parse_config("{ not json") {
            Err(Error::ParseError(msg)) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_seeds_rejected() {
        let text = MINIMAL_QUADRATIC.replace("\"seeds\": [0, 1]", "\"seeds\": []");
        match parse_config(&text) {
            Err(Error::ValidationError { field, .. }) => assert_eq!(field, "seeds"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn theta0_dim_checked() {
        let text = MINIMAL_QUADRATIC.replace("[1.4, -1.4]", "[1.4, -1.4, 0.0]");
        assert!(matches!(
            parse_config(&text),
            Err(Error::ValidationError { .. })
        ));
    }

    #[test]
    fn stability_template_parses() {
        let text = r#"{
            "experiment": "stability",
            "system_a": {
                "matrix": {"kind": "explicit", "rows": [[2.0, 1.0], [1.0, 2.0]]},
                "diffusion": {"kind": "sqrt_a"},
                "alpha": 0.1,
                "theta0": [0.0, 0.0]
            },
            "system_b": {
                "matrix": {"kind": "explicit", "rows": [[2.0, 1.0], [1.0, 2.0]]},
                "diffusion": {"kind": "sqrt_a"},
                "alpha": 0.1,
                "theta0": [1.0, 0.0]
            },
            "t_grid": [0.5, 1.0],
            "lambda_grid": [0.001, 0.01, 0.1, 1.0]
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.kind(), "stability");
    }

    #[test]
    fn train_template_parses() {
        let text = r#"{
            "experiment": "train",
            "data": {"kind": "blobs", "n": 16, "in_dim": 2, "classes": 2, "spread": 1.0, "seed": 1},
            "mlp": {"hidden": [6], "activation": "relu", "init_scale": 0.8, "init_seed": 2},
            "regimes": [
                {"kind": "none"},
                {"kind": "fisher_diag", "m_small": 1, "termination_fraction": 1.0}
            ],
            "schedule": {"kind": "constant", "alpha": 0.2},
            "steps": 10,
            "seeds": [3]
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.kind(), "train");
    }
}
