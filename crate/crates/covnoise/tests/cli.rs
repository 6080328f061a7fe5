//! End-to-end checks of the command-line surface: exit codes, output
//! artifacts, and config plumbing.

use std::path::Path;

use covnoise::cli::{dispatch, run_for_test, CliInvocation};
use covnoise::harness::idx;
use covnoise::harness::io::read_trajectory_csv;

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn missing_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_for_test(
        "quadratic",
        &dir.path().join("nope.json"),
        &dir.path().join("out"),
        1,
    );
    assert_eq!(code, 1);
}

#[test]
fn subcommand_config_kind_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stability.json");
    write(
        &cfg,
        r#"{
            "experiment": "stability",
            "system_a": {"matrix": {"kind": "explicit", "rows": [[1.0]]},
                          "diffusion": {"kind": "identity"}, "alpha": 0.1, "theta0": [0.0]},
            "system_b": {"matrix": {"kind": "explicit", "rows": [[1.0]]},
                          "diffusion": {"kind": "identity"}, "alpha": 0.1, "theta0": [1.0]},
            "t_grid": [1.0],
            "lambda_grid": [1.0]
        }"#,
    );
    assert_eq!(run_for_test("train", &cfg, &dir.path().join("out"), 1), 1);
    assert_eq!(
        run_for_test("stability", &cfg, &dir.path().join("out"), 1),
        0
    );
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(
        &cfg,
        r#"{
            "experiment": "quadratic",
            "matrix": {"kind": "explicit", "rows": [[1.0]]},
            "noise": [{"kind": "zero"}],
            "schedule": {"kind": "constant", "alpha": 0.1},
            "theta0": [1.0],
            "steps": 5,
            "momentum": 0.9
        }"#,
    );
    assert_eq!(run_for_test("quadratic", &cfg, &dir.path().join("out"), 1), 1);
}

#[test]
fn divergent_training_run_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diverge.json");
    write(
        &cfg,
        r#"{
            "experiment": "train",
            "data": {"kind": "blobs", "n": 16, "in_dim": 2, "classes": 2, "spread": 3.0, "seed": 4},
            "mlp": {"hidden": [4], "activation": "relu", "init_scale": 1.0, "init_seed": 1},
            "regimes": [{"kind": "none"}],
            "schedule": {"kind": "constant", "alpha": 10000.0},
            "steps": 200,
            "seeds": [1]
        }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run_for_test("train", &cfg, &out, 1), 2);
    // partial log with the diagnostic row still written
    let rows = read_trajectory_csv(&out.join("train_none_seed1.csv")).unwrap();
    assert!(!rows.is_empty());
    let last = rows.last().unwrap();
    assert!(!last.2.is_finite() || last.2 > 1e12);
}

#[test]
fn out_dir_env_variable_is_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quad.json");
    write(
        &cfg,
        r#"{
            "experiment": "quadratic",
            "matrix": {"kind": "explicit", "rows": [[1.0]]},
            "noise": [{"kind": "zero"}],
            "schedule": {"kind": "constant", "alpha": 0.5},
            "theta0": [1.0],
            "steps": 5,
            "seeds": [0]
        }"#,
    );
    let env_out = dir.path().join("env_out");
    // set the env var for this test only; no other test reads it
    std::env::set_var(covnoise::cli::OUT_DIR_ENV, &env_out);
    let code = dispatch(&CliInvocation {
        subcommand: "quadratic",
        config_path: cfg.clone(),
        out: None,
        seed: None,
        seeds: None,
        jobs: 1,
    });
    std::env::remove_var(covnoise::cli::OUT_DIR_ENV);
    assert_eq!(code, 0);
    assert!(env_out.join("quadratic_zero_seed0.csv").exists());
}

#[test]
fn seed_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quad.json");
    write(
        &cfg,
        r#"{
            "experiment": "quadratic",
            "matrix": {"kind": "explicit", "rows": [[1.0]]},
            "noise": [{"kind": "isotropic", "sigma": 0.2}],
            "schedule": {"kind": "constant", "alpha": 0.5},
            "theta0": [1.0],
            "steps": 5,
            "seeds": [0]
        }"#,
    );
    let out = dir.path().join("out");
    let code = dispatch(&CliInvocation {
        subcommand: "quadratic",
        config_path: cfg,
        out: Some(out.clone()),
        seed: Some(40),
        seeds: Some(3),
        jobs: 1,
    });
    assert_eq!(code, 0);
    for seed in 40..43 {
        assert!(out.join(format!("quadratic_isotropic0.2_seed{seed}.csv")).exists());
    }
    assert!(!out.join("quadratic_isotropic0.2_seed0.csv").exists());
}

#[test]
fn toy2d_and_stability_artifacts_exist() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy.json");
    write(
        &toy,
        r#"{
            "experiment": "toy2d",
            "n": 32,
            "noise_sd": 0.2,
            "data_seed": 3,
            "noise": [{"kind": "sqrt_a"}, {"kind": "sqrt_diag_a"}],
            "alpha": 0.1,
            "steps": 50,
            "log_every": 10,
            "theta0": [1.0, 1.0],
            "seeds": [0]
        }"#,
    );
    let out = dir.path().join("toy_out");
    assert_eq!(run_for_test("toy2d", &toy, &out, 1), 0);
    for name in [
        "toy2d_sqrt_a_seed0.csv",
        "toy2d_sqrt_a_seed0_params.csv",
        "toy2d_sqrt_diag_a_seed0.csv",
        "toy2d_trajectory.svg",
        "toy2d_loss.svg",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let svg = std::fs::read_to_string(out.join("toy2d_trajectory.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));

    let stab = dir.path().join("stab.json");
    write(
        &stab,
        r#"{
            "experiment": "stability",
            "system_a": {"matrix": {"kind": "explicit", "rows": [[2.0, 1.0], [1.0, 2.0]]},
                          "diffusion": {"kind": "sqrt_a"}, "alpha": 0.1, "theta0": [0.0, 0.0]},
            "system_b": {"matrix": {"kind": "explicit", "rows": [[2.0, 1.0], [1.0, 2.0]]},
                          "diffusion": {"kind": "identity"}, "alpha": 0.1, "theta0": [1.0, 0.0]},
            "t_grid": [0.5, 1.0],
            "lambda_grid": [0.001, 0.01, 0.1, 1.0]
        }"#,
    );
    let stab_out = dir.path().join("stab_out");
    assert_eq!(run_for_test("stability", &stab, &stab_out, 1), 0);
    for name in [
        "hellinger_t.csv",
        "hellinger_lambda.csv",
        "hellinger_lambda.svg",
        "det_check.csv",
    ] {
        assert!(stab_out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn diagnose_suite_artifacts_exist() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diag.json");
    write(
        &cfg,
        r#"{
            "experiment": "diagnose",
            "data": {"kind": "blobs", "n": 24, "in_dim": 2, "classes": 2, "spread": 1.0, "seed": 2},
            "mlp": {"hidden": [5], "activation": "tanh", "init_scale": 0.8, "init_seed": 3},
            "pretrain": {"steps": 30, "alpha": 0.3},
            "frobenius_every": 10,
            "variance": {
                "batch_size": 6,
                "draws": 200,
                "seed": 9,
                "regimes": [
                    {"kind": "none", "small_batch": true},
                    {"kind": "none"},
                    {"kind": "fisher_full", "m_small": 6, "termination_fraction": 1.0},
                    {"kind": "fisher_diag", "m_small": 6, "termination_fraction": 1.0}
                ]
            },
            "eigen": {"max_iters": 200, "tol": 1e-6},
            "seeds": [1, 2]
        }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run_for_test("diagnose", &cfg, &out, 2), 0);
    for name in [
        "frobenius.csv",
        "frobenius.svg",
        "variance.csv",
        "variance_sb_none.csv",
        "variance_lb_fisher_full.csv",
        "variance.svg",
        "eigen.csv",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn quadratic_constant_schedule_runs_without_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quad.json");
    write(
        &cfg,
        r#"{
            "experiment": "quadratic",
            "matrix": {"kind": "explicit", "rows": [[2.0, 1.0], [1.0, 2.0]]},
            "noise": [{"kind": "sqrt_a"}],
            "schedule": {"kind": "constant", "alpha": 0.1},
            "theta0": [1.0, 1.0],
            "steps": 50,
            "log_every": 10,
            "seeds": [0]
        }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run_for_test("quadratic", &cfg, &out, 1), 0);
    // the bound column is NaN under a constant schedule
    let text = std::fs::read_to_string(out.join("quadratic_sqrt_a_mean.csv")).unwrap();
    let second_line = text.lines().nth(1).unwrap();
    assert!(second_line.ends_with("NaN"), "line: {second_line}");
}

#[test]
fn regimes_with_same_seed_share_step_and_alpha_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    write(
        &cfg,
        r#"{
            "experiment": "train",
            "data": {"kind": "blobs", "n": 16, "in_dim": 2, "classes": 2, "spread": 1.0, "seed": 2},
            "mlp": {"hidden": [4], "activation": "tanh", "init_scale": 0.8, "init_seed": 1},
            "regimes": [
                {"kind": "none"},
                {"kind": "fisher_diag", "m_small": 1, "termination_fraction": 1.0}
            ],
            "schedule": {"kind": "constant", "alpha": 0.2},
            "steps": 30,
            "seeds": [5]
        }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run_for_test("train", &cfg, &out, 1), 0);
    let quiet = read_trajectory_csv(&out.join("train_none_seed5.csv")).unwrap();
    let noisy = read_trajectory_csv(&out.join("train_fisher_diag_seed5.csv")).unwrap();
    assert_eq!(quiet.len(), noisy.len());
    let mut noise_differs = false;
    for (a, b) in quiet.iter().zip(&noisy) {
        assert_eq!(a.0, b.0, "step column");
        assert_eq!(a.1.to_bits(), b.1.to_bits(), "alpha column");
        if a.4 != b.4 {
            noise_differs = true;
        }
    }
    assert!(noise_differs, "noise columns should differ between regimes");
}

#[test]
fn idx_data_source_trains() {
    let dir = tempfile::tempdir().unwrap();
    // two 2x2 images, two labels
    let mut images = Vec::new();
    images.extend_from_slice(&idx::IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&[0, 64, 128, 255, 255, 128, 64, 0]);
    let img_path = dir.path().join("imgs.idx");
    std::fs::write(&img_path, images).unwrap();
    let lab_path = dir.path().join("labs.idx");
    std::fs::write(&lab_path, idx::write_idx_labels(&[0, 1]).unwrap()).unwrap();

    let cfg = dir.path().join("train.json");
    write(
        &cfg,
        &format!(
            r#"{{
                "experiment": "train",
                "data": {{"kind": "idx", "images": {img:?}, "labels": {lab:?}}},
                "mlp": {{"hidden": [3], "activation": "tanh", "init_scale": 0.5, "init_seed": 1}},
                "regimes": [{{"kind": "fisher_diag", "m_small": 1, "termination_fraction": 1.0}}],
                "schedule": {{"kind": "constant", "alpha": 0.1}},
                "steps": 5,
                "seeds": [1]
            }}"#,
            img = img_path.to_str().unwrap(),
            lab = lab_path.to_str().unwrap(),
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(run_for_test("train", &cfg, &out, 1), 0);
    let rows = read_trajectory_csv(&out.join("train_fisher_diag_seed1.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.2.is_finite()));
}
