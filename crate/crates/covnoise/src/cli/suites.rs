//! The experiment suites behind each subcommand. All fan-out is over
//! (variant, seed) pairs with results collected in declaration order, so
//! output files are byte-identical regardless of worker count.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::harness::config::{
    DiagnoseConfig, DiffusionConfig, QuadraticConfig, StabilityConfig, Toy2dConfig, TrainConfig,
};
use crate::harness::io::{format_float, write_table, write_trajectory_csv, write_variance_csv};
use crate::harness::svg::{emit_svg_labeled, PlotKind, Series};
use crate::network::batch_loss_and_gradient;
use crate::optimizer::{run_mlp, run_quadratic, RunConfig, TrajectoryLog};
use crate::quadratic::{QuadraticProblem, StepSchedule};
use crate::Rng;

/// Seed-mean and standard error of the loss at each logged step.
struct Aggregate {
    steps: Vec<u64>,
    mean: Vec<f64>,
    stderr: Vec<f64>,
}

fn aggregate_losses(logs: &[TrajectoryLog]) -> Aggregate {
    let steps: Vec<u64> = logs[0].rows.iter().map(|r| r.step).collect();
    let n = logs.len() as f64;
    let mut mean = vec![0.0; steps.len()];
    let mut m2 = vec![0.0; steps.len()];
    // Welford across seeds, sequential in seed order
    for (count, log) in logs.iter().enumerate() {
        for (i, row) in log.rows.iter().enumerate() {
            let delta = row.loss - mean[i];
            mean[i] += delta / (count as f64 + 1.0);
            m2[i] += delta * (row.loss - mean[i]);
        }
    }
    let stderr = m2
        .iter()
        .map(|&s| if logs.len() > 1 { (s / (n - 1.0) / n).sqrt() } else { 0.0 })
        .collect();
    Aggregate { steps, mean, stderr }
}

/// Median first-crossing step over seeds; seeds that never cross count as
/// larger than every crossing. Returns (number reached, median or None when
/// the median itself is a never-crossed seed).
fn median_steps(logs: &[TrajectoryLog], eps: f64) -> (usize, Option<f64>) {
    let mut keys: Vec<u64> = logs
        .iter()
        .map(|l| l.iterations_to_epsilon(eps).unwrap_or(u64::MAX))
        .collect();
    let count = keys.iter().filter(|&&k| k != u64::MAX).count();
    keys.sort_unstable();
    let n = keys.len();
    let med = if n % 2 == 1 {
        let m = keys[n / 2];
        (m != u64::MAX).then_some(m as f64)
    } else {
        let (a, b) = (keys[n / 2 - 1], keys[n / 2]);
        (a != u64::MAX && b != u64::MAX).then(|| (a as f64 + b as f64) / 2.0)
    };
    (count, med)
}

fn mean_loss_points(agg: &Aggregate) -> Vec<(f64, f64)> {
    agg.steps
        .iter()
        .enumerate()
        .map(|(i, &k)| (k as f64, agg.mean[i]))
        .collect()
}

pub fn run_quadratic_suite(config: &QuadraticConfig, out: &Path) -> Result<Vec<String>> {
    let a = config.matrix.build()?;
    let problem = QuadraticProblem::new(a)?;
    let schedule = config.schedule.build(problem.lambda_min())?;
    let theta0 = config.theta0_vector();

    let mut summaries = Vec::new();
    let mut plot_series = Vec::new();
    for noise in &config.noise {
        let label = noise.label();
        let spec = noise.build(&problem)?;
        let logs: Vec<TrajectoryLog> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let cfg = RunConfig::new(config.steps, schedule.clone(), seed)?
                    .log_every(config.log_every)?;
                run_quadratic(&problem, &spec, &cfg, &theta0)
            })
            .collect::<Result<_>>()?;
        for (seed, log) in config.seeds.iter().zip(&logs) {
            write_trajectory_csv(log, &out.join(format!("quadratic_{label}_seed{seed}.csv")))?;
        }
        let agg = aggregate_losses(&logs);
        let c_matrix = spec.matrix();
        let bound: Vec<f64> = match schedule.gamma() {
            Some(gamma) => agg
                .steps
                .iter()
                .map(|&k| problem.theorem_bound(&c_matrix, &theta0, gamma, k))
                .collect::<Result<_>>()?,
            None => vec![f64::NAN; agg.steps.len()],
        };
        let rows: Vec<Vec<String>> = agg
            .steps
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                vec![
                    k.to_string(),
                    format_float(agg.mean[i]),
                    format_float(agg.stderr[i]),
                    format_float(bound[i]),
                ]
            })
            .collect();
        write_table(
            &out.join(format!("quadratic_{label}_mean.csv")),
            &["step", "mean_loss", "stderr_loss", "bound"],
            &rows,
        )?;
        plot_series.push(Series::new(format!("{label} mean"), mean_loss_points(&agg)));
        if schedule.gamma().is_some() {
            plot_series.push(Series::new(
                format!("{label} bound"),
                agg.steps
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| (k as f64, bound[i]))
                    .collect(),
            ));
        }
        let mut line = format!(
            "quadratic {label}: seeds={} final_mean_loss={:.6e}",
            config.seeds.len(),
            agg.mean.last().copied().unwrap_or(f64::NAN)
        );
        for &eps in &config.eps_grid {
            let (count, med) = median_steps(&logs, eps);
            match med {
                Some(m) => line.push_str(&format!(" k(eps={eps})={m}")),
                None => line.push_str(&format!(" k(eps={eps})=not_reached({count})")),
            }
        }
        summaries.push(line);
    }
    emit_svg_labeled(
        &plot_series,
        &PlotKind::Line { log_y: true },
        "step",
        "loss",
        &out.join("quadratic_bounds.svg"),
    )?;
    Ok(summaries)
}

pub fn run_toy2d_suite(config: &Toy2dConfig, out: &Path) -> Result<Vec<String>> {
    let (dataset, problem) =
        crate::harness::data::gen_toy_2d(config.n, config.noise_sd, config.data_seed)?;
    let w_star = crate::harness::data::toy2d_least_squares(&dataset)?;
    let schedule = StepSchedule::constant(config.alpha)?;
    let theta0 = DVector::from_vec(config.theta0.clone());

    let mut summaries = Vec::new();
    let mut trajectory_series = Vec::new();
    let mut loss_series = Vec::new();
    for noise in &config.noise {
        let label = noise.label();
        let spec = noise.build(&problem)?;
        let logs: Vec<TrajectoryLog> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let cfg = RunConfig::new(config.steps, schedule.clone(), seed)?
                    .log_every(config.log_every)?
                    .record_params(true);
                run_quadratic(&problem, &spec, &cfg, &theta0)
            })
            .collect::<Result<_>>()?;
        for (seed, log) in config.seeds.iter().zip(&logs) {
            write_trajectory_csv(log, &out.join(format!("toy2d_{label}_seed{seed}.csv")))?;
            crate::harness::io::write_params_csv(
                log,
                &out.join(format!("toy2d_{label}_seed{seed}_params.csv")),
            )?;
        }
        let path_pts: Vec<(f64, f64)> = logs[0]
            .rows
            .iter()
            .filter_map(|r| r.params.as_ref().map(|p| (p[0], p[1])))
            .collect();
        trajectory_series.push(Series::new(label.clone(), path_pts));
        let agg = aggregate_losses(&logs);
        loss_series.push(Series::new(label.clone(), mean_loss_points(&agg)));
        summaries.push(format!(
            "toy2d {label}: seeds={} final_mean_loss={:.6e} w_star=({:.6}, {:.6})",
            config.seeds.len(),
            agg.mean.last().copied().unwrap_or(f64::NAN),
            w_star[0],
            w_star[1]
        ));
    }
    emit_svg_labeled(
        &trajectory_series,
        &PlotKind::Trajectory2d { problem },
        "theta1 - w1*",
        "theta2 - w2*",
        &out.join("toy2d_trajectory.svg"),
    )?;
    emit_svg_labeled(
        &loss_series,
        &PlotKind::Line { log_y: true },
        "step",
        "loss",
        &out.join("toy2d_loss.svg"),
    )?;
    Ok(summaries)
}

pub fn run_train_suite(config: &TrainConfig, out: &Path) -> Result<Vec<String>> {
    let dataset = config.data.load()?;
    let data = dataset.batch();
    let classes = data.labels().iter().max().map_or(1, |m| m + 1);
    let in_dim = data.inputs().ncols();
    let param_dim = config.mlp.build(in_dim, classes)?.param_dim();
    let schedule = config.schedule.build(1.0)?;

    let mut summaries = Vec::new();
    let mut loss_series = Vec::new();
    let mut first_divergence: Option<u64> = None;
    for regime_cfg in &config.regimes {
        let label = regime_cfg.label();
        let regime = regime_cfg.build(param_dim, data.len())?;
        let runs: Vec<std::result::Result<TrajectoryLog, (u64, TrajectoryLog)>> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let mlp0 = config.mlp.build_with_offset(in_dim, classes, seed)?;
                let mut cfg = RunConfig::new(config.steps, schedule.clone(), seed)?;
                cfg.log_every = config.log_every;
                cfg.grad_batch_size = config.grad_batch_size;
                match run_mlp(&mlp0, data, &regime, &cfg) {
                    Ok(log) => Ok(Ok(log)),
                    Err(Error::NonFiniteLoss { step, log }) => Ok(Err((step, *log))),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let mut logs = Vec::with_capacity(runs.len());
        for (seed, run) in config.seeds.iter().zip(runs) {
            let path = out.join(format!("train_{label}_seed{seed}.csv"));
            match run {
                Ok(log) => {
                    write_trajectory_csv(&log, &path)?;
                    logs.push(log);
                }
                Err((step, log)) => {
                    write_trajectory_csv(&log, &path)?;
                    summaries
                        .push(format!("train {label} seed {seed}: diverged at step {step}"));
                    first_divergence.get_or_insert(step);
                }
            }
        }
        if logs.is_empty() {
            continue;
        }
        let agg = aggregate_losses(&logs);
        loss_series.push(Series::new(label.clone(), mean_loss_points(&agg)));
        let mut line = format!(
            "train {label}: seeds={} final_mean_loss={:.6e}",
            logs.len(),
            agg.mean.last().copied().unwrap_or(f64::NAN)
        );
        for &thr in &config.loss_thresholds {
            let (count, med) = median_steps(&logs, thr);
            match med {
                Some(m) => line.push_str(&format!(" k(loss<={thr})={m}")),
                None => line.push_str(&format!(" k(loss<={thr})=not_reached({count})")),
            }
        }
        summaries.push(line);
    }
    if !loss_series.is_empty() {
        emit_svg_labeled(
            &loss_series,
            &PlotKind::Line { log_y: true },
            "step",
            "training loss",
            &out.join("train_loss.svg"),
        )?;
    }
    if let Some(step) = first_divergence {
        for line in &summaries {
            eprintln!("{line}");
        }
        return Err(Error::NonFiniteLoss {
            step,
            log: Box::new(TrajectoryLog::default()),
        });
    }
    Ok(summaries)
}

pub fn run_diagnose_suite(config: &DiagnoseConfig, out: &Path) -> Result<Vec<String>> {
    let dataset = config.data.load()?;
    let data = dataset.batch();
    let classes = data.labels().iter().max().map_or(1, |m| m + 1);
    let mut mlp = config.mlp.build(data.inputs().ncols(), classes)?;
    let mut summaries = Vec::new();

    // plain-descent pretraining with Frobenius checkpoints
    let mut frob_rows: Vec<Vec<String>> = Vec::new();
    let mut frob_full_series = Vec::new();
    let mut frob_diag_series = Vec::new();
    let schedule = StepSchedule::constant(config.pretrain.alpha)?;
    let mut theta = mlp.flatten();
    for k in 0..=config.pretrain.steps {
        if k % config.frobenius_every == 0 || k == config.pretrain.steps {
            let grads = crate::network::per_example_gradients(&mlp, data)?;
            let (full, diag) = diagnostics::frobenius_pair(&grads)?;
            frob_rows.push(vec![k.to_string(), format_float(full), format_float(diag)]);
            frob_full_series.push((k as f64, full));
            frob_diag_series.push((k as f64, diag));
        }
        if k == config.pretrain.steps {
            break;
        }
        let (_, grad) = batch_loss_and_gradient(&mlp, data)?;
        theta = crate::optimizer::pgd_step(
            &theta,
            &grad,
            schedule.alpha(k + 1),
            &DVector::zeros(theta.len()),
        )?;
        mlp.set_flat(&theta)?;
    }
    write_table(
        &out.join("frobenius.csv"),
        &["step", "frob_full", "frob_diag"],
        &frob_rows,
    )?;
    emit_svg_labeled(
        &[
            Series::new("full Fisher", frob_full_series),
            Series::new("diagonal Fisher", frob_diag_series),
        ],
        &PlotKind::Line { log_y: false },
        "pretraining step",
        "Frobenius norm",
        &out.join("frobenius.svg"),
    )?;
    let (loss_now, _) = batch_loss_and_gradient(&mlp, data)?;
    summaries.push(format!(
        "diagnose pretrain: {} steps, loss={:.6e}",
        config.pretrain.steps, loss_now
    ));

    // gradient-variance reports at the partially trained point; each regime
    // owns an independent stream so the list order cannot leak between rows
    let reports: Vec<diagnostics::VarianceReport> = config
        .variance
        .regimes
        .par_iter()
        .enumerate()
        .map(|(i, regime_cfg)| {
            let regime = regime_cfg.build(mlp.param_dim(), data.len())?;
            let batch_size = if regime_cfg.small_batch {
                config.variance.batch_size
            } else {
                data.len()
            };
            let mut rng = Rng::new(config.variance.seed.wrapping_add(i as u64));
            diagnostics::avg_gradient_variance(
                &mlp,
                data,
                batch_size,
                &regime,
                config.variance.draws,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    let mut variance_rows: Vec<Vec<String>> = Vec::new();
    let mut variance_series = Vec::new();
    for (regime_cfg, report) in config.variance.regimes.iter().zip(&reports) {
        let label = if regime_cfg.small_batch {
            format!("sb_{}", regime_cfg.label())
        } else {
            format!("lb_{}", regime_cfg.label())
        };
        write_variance_csv(report, &out.join(format!("variance_{label}.csv")))?;
        for lv in &report.per_layer {
            variance_rows.push(vec![
                label.clone(),
                lv.layer.to_string(),
                format_float(lv.mean_variance),
            ]);
        }
        variance_series.push(Series::new(
            label.clone(),
            report
                .per_layer
                .iter()
                .map(|lv| (lv.layer as f64, lv.mean_variance))
                .collect(),
        ));
        let avg: f64 = report.per_layer.iter().map(|lv| lv.mean_variance).sum::<f64>()
            / report.per_layer.len() as f64;
        summaries.push(format!(
            "diagnose variance {label}: batch={} draws={} layer_avg={:.6e}",
            report.batch_size, report.draws, avg
        ));
    }
    write_table(
        &out.join("variance.csv"),
        &["regime", "layer", "avg_variance"],
        &variance_rows,
    )?;
    emit_svg_labeled(
        &variance_series,
        &PlotKind::Line { log_y: true },
        "layer",
        "avg variance",
        &out.join("variance.svg"),
    )?;

    // extreme Hessian eigenvalue at the partially trained point
    let loss_fn = |params: &DVector<f64>| {
        let probe = mlp.with_flat(params).expect("matching shapes");
        batch_loss_and_gradient(&probe, data).expect("same data evaluated throughout")
    };
    let estimates: Vec<(u64, diagnostics::EigenEstimate)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = Rng::new(seed);
            let est = diagnostics::max_hessian_eigenvalue(
                loss_fn,
                &theta,
                config.eigen.max_iters,
                config.eigen.tol,
                &mut rng,
            );
            (seed, est)
        })
        .collect();
    let eigen_rows: Vec<Vec<String>> = estimates
        .iter()
        .map(|(seed, est)| {
            vec![
                seed.to_string(),
                format_float(est.lambda_max),
                est.iterations.to_string(),
                format_float(est.residual),
                est.converged.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("eigen.csv"),
        &["seed", "lambda_max", "iterations", "residual", "converged"],
        &eigen_rows,
    )?;
    for (seed, est) in &estimates {
        summaries.push(format!(
            "diagnose eigen seed {seed}: lambda_max={:.6e} iters={} converged={}",
            est.lambda_max, est.iterations, est.converged
        ));
    }
    Ok(summaries)
}

pub fn run_stability_suite(config: &StabilityConfig, out: &Path) -> Result<Vec<String>> {
    let sys_a = config.system_a.build()?;
    let sys_b = config.system_b.build()?;
    let mut summaries = Vec::new();

    // Hellinger across the time grid, unscaled diffusion
    let h2_t: Vec<f64> = config
        .t_grid
        .iter()
        .map(|&t| crate::stability::hellinger_sq(&sys_a.marginal(t)?, &sys_b.marginal(t)?))
        .collect::<Result<_>>()?;
    let t_rows: Vec<Vec<String>> = config
        .t_grid
        .iter()
        .zip(&h2_t)
        .map(|(&t, &h2)| vec![format_float(t), format_float(h2)])
        .collect();
    write_table(&out.join("hellinger_t.csv"), &["t", "h2"], &t_rows)?;

    // diffusion-scaling sweep at the largest grid time
    let t_eval = config.t_grid.iter().cloned().fold(0.0, f64::max);
    let h2_lambda: Vec<f64> = config
        .lambda_grid
        .iter()
        .map(|&lambda| crate::stability::scaled_hellinger(&sys_a, &sys_b, lambda, t_eval))
        .collect::<Result<_>>()?;
    let lambda_rows: Vec<Vec<String>> = config
        .lambda_grid
        .iter()
        .zip(&h2_lambda)
        .map(|(&l, &h2)| vec![format_float(l), format_float(h2)])
        .collect();
    write_table(
        &out.join("hellinger_lambda.csv"),
        &["lambda", "h2"],
        &lambda_rows,
    )?;
    emit_svg_labeled(
        &[Series::new(
            "H^2",
            config
                .lambda_grid
                .iter()
                .zip(&h2_lambda)
                .map(|(&l, &h2)| (l.log10(), h2))
                .collect(),
        )],
        &PlotKind::Line { log_y: false },
        "log10 lambda",
        "squared Hellinger distance",
        &out.join("hellinger_lambda.svg"),
    )?;

    // determinant checks against the closed-form special cases
    let mut det_rows: Vec<Vec<String>> = Vec::new();
    for (name, sys, diffusion) in [
        ("a", &sys_a, &config.system_a.diffusion),
        ("b", &sys_b, &config.system_b.diffusion),
    ] {
        for &t in &config.t_grid {
            let det = sys.covariance(t).determinant();
            let eigs = sys.problem().spectrum().eigenvalues();
            let damping: f64 = eigs.iter().map(|&l| 1.0 - (-2.0 * l * t).exp()).product();
            let half_alpha_pow = (sys.alpha() / 2.0).powi(sys.dim() as i32);
            let formula = match diffusion {
                DiffusionConfig::SqrtA => Some(half_alpha_pow * damping),
                DiffusionConfig::Identity => {
                    let det_d: f64 = eigs.iter().product();
                    Some(half_alpha_pow * damping / det_d)
                }
                _ => None,
            };
            det_rows.push(vec![
                name.to_string(),
                format_float(t),
                format_float(det),
                formula.map_or_else(String::new, format_float),
            ]);
        }
    }
    write_table(
        &out.join("det_check.csv"),
        &["system", "t", "det_sigma", "det_formula"],
        &det_rows,
    )?;

    summaries.push(format!(
        "stability: h2(t={t_eval})={:.6e} h2(lambda={:.0e})={:.6e}",
        h2_t.last().copied().unwrap_or(f64::NAN),
        config.lambda_grid.first().copied().unwrap_or(f64::NAN),
        h2_lambda.first().copied().unwrap_or(f64::NAN),
    ));
    Ok(summaries)
}
