//! Command-line entry point: dispatches the experiment suites and emits
//! CSV/SVG artifacts.
//!
//! Exit codes: 0 success, 1 configuration/validation problems, 2 runtime
//! failures (divergence, IO during a run).

mod suites;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::harness::config::{parse_config, ExperimentConfig};

pub const OUT_DIR_ENV: &str = "COVNOISE_OUT";

#[derive(Debug, Parser)]
#[command(name = "covnoise", about = "Structured covariance-noise experiment suites", version)]
pub struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergence-bound verification on convex quadratics.
    Quadratic(CommonFlags),
    /// Full vs diagonal noise trajectories on the 2-D toy regression.
    Toy2d(CommonFlags),
    /// Noisy training runs on a small feed-forward network.
    Train(CommonFlags),
    /// Frobenius norms, gradient variance, and extreme Hessian eigenvalues.
    Diagnose(CommonFlags),
    /// Ornstein-Uhlenbeck / Hellinger stability quantities.
    Stability(CommonFlags),
}

#[derive(Debug, Args, Clone)]
pub struct CommonFlags {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: config out_dir, then $COVNOISE_OUT,
    /// then ./covnoise_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config's seed list with this base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate count: run seeds base..base+N-1.
    #[arg(long)]
    seeds: Option<u64>,
    /// Worker threads for the seed/regime fan-out (affects wall time only).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// A fully resolved invocation.
#[derive(Debug, Clone)]
pub struct CliInvocation {
    pub subcommand: &'static str,
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub seeds: Option<u64>,
    pub jobs: usize,
}

impl CliInvocation {
    fn from_flags(subcommand: &'static str, flags: &CommonFlags) -> Self {
        Self {
            subcommand,
            config_path: flags.config.clone(),
            out: flags.out.clone(),
            seed: flags.seed,
            seeds: flags.seeds,
            jobs: flags.jobs.max(1),
        }
    }
}

/// Parse argv and run; returns the process exit code.
pub fn main_entry() -> i32 {
    let args = CliArgs::parse();
    let inv = match &args.command {
        Command::Quadratic(f) => CliInvocation::from_flags("quadratic", f),
        Command::Toy2d(f) => CliInvocation::from_flags("toy2d", f),
        Command::Train(f) => CliInvocation::from_flags("train", f),
        Command::Diagnose(f) => CliInvocation::from_flags("diagnose", f),
        Command::Stability(f) => CliInvocation::from_flags("stability", f),
    };
    dispatch(&inv)
}

fn validation_failure(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    1
}

fn runtime_failure(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    2
}

/// Run one experiment invocation end to end.
pub fn dispatch(inv: &CliInvocation) -> i32 {
    let text = match std::fs::read_to_string(&inv.config_path) {
        Ok(t) => t,
        Err(e) => {
            return validation_failure(format_args!(
                "cannot read config {}: {e}",
                inv.config_path.display()
            ))
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return validation_failure(e),
    };
    if config.kind() != inv.subcommand {
        return validation_failure(format_args!(
            "config is a `{}` experiment but the `{}` subcommand was invoked",
            config.kind(),
            inv.subcommand
        ));
    }
    if let Some(seeds) = resolve_seeds(inv, &config) {
        config.set_seeds(seeds);
    }
    let out_dir = resolve_out_dir(inv, &config);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return validation_failure(format_args!(
            "cannot create output directory {}: {e}",
            out_dir.display()
        ));
    }

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(inv.jobs).build() {
        Ok(p) => p,
        Err(e) => return runtime_failure(e),
    };
    let result = pool.install(|| match &config {
        ExperimentConfig::Quadratic(c) => suites::run_quadratic_suite(c, &out_dir),
        ExperimentConfig::Toy2d(c) => suites::run_toy2d_suite(c, &out_dir),
        ExperimentConfig::Train(c) => suites::run_train_suite(c, &out_dir),
        ExperimentConfig::Diagnose(c) => suites::run_diagnose_suite(c, &out_dir),
        ExperimentConfig::Stability(c) => suites::run_stability_suite(c, &out_dir),
    });
    match result {
        Ok(summaries) => {
            for line in summaries {
                println!("{line}");
            }
            0
        }
        Err(e @ (Error::ValidationError { .. } | Error::ParseError(_))) => validation_failure(e),
        Err(e) => runtime_failure(e),
    }
}

fn resolve_seeds(inv: &CliInvocation, config: &ExperimentConfig) -> Option<Vec<u64>> {
    match (inv.seed, inv.seeds) {
        (None, None) => None,
        (base, count) => {
            let base = base.unwrap_or_else(|| config.seeds().first().copied().unwrap_or(0));
            let count = count.unwrap_or(1).max(1);
            Some((base..base + count).collect())
        }
    }
}

fn resolve_out_dir(inv: &CliInvocation, config: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &inv.out {
        return out.clone();
    }
    if let Some(dir) = config.out_dir() {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("covnoise_out")
}

/// Convenience used by tests: run a subcommand against a config path.
pub fn run_for_test(subcommand: &'static str, config_path: &Path, out: &Path, jobs: usize) -> i32 {
    dispatch(&CliInvocation {
        subcommand,
        config_path: config_path.to_path_buf(),
        out: Some(out.to_path_buf()),
        seed: None,
        seeds: None,
        jobs,
    })
}
