//! End-to-end tests of the `excursor` binary: every subcommand, the
//! documented exit codes, and the reproducibility guarantees (same seed =>
//! byte-identical files, manifest replays a run exactly).

use std::path::Path;
use std::process::{Command, Output};

fn excursor(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_excursor"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to launch the excursor binary")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout was not UTF-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr was not UTF-8")
}

fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed with {:?}: {}",
        output.status.code(),
        stderr_of(output)
    );
}

fn assert_exit_code(output: &Output, expected: i32, what: &str) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "{what}: expected exit code {expected}, stderr: {}",
        stderr_of(output)
    );
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).expect("cannot write test fixture");
    path.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("cannot read {name}: {e}"))
}

const EXPONENTIAL_CONFIG: &str = r#"{
  "model": {"kind": "exponential", "sigma2": 1.0, "length_scale": 10.0},
  "marginal": {"mu": 0.0, "sigma": 1.0},
  "window": [[0.0, 100.0]],
  "mesh": 0.1,
  "seed": 7
}"#;

// ---------------------------------------------------------------------------
// orthant

#[test]
fn orthant_prints_frozen_values() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (["orthant", "0", "1"], "5.00000000000000e-1"),
        (["orthant", "1", "0"], "2.51714896000551e-2"),
        (["orthant", "0.7", "0.6"], "1.28629060309405e-1"),
    ];
    for (args, expected) in cases {
        let output = excursor(&args, dir.path());
        assert_success(&output, "orthant");
        assert_eq!(
            stdout_of(&output).trim(),
            expected,
            "orthant {args:?} printed the wrong probability"
        );
    }
}

#[test]
fn orthant_rejects_out_of_range_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let output = excursor(&["orthant", "0", "1.5"], dir.path());
    assert_exit_code(&output, 2, "orthant with rho = 1.5");
    assert!(
        stderr_of(&output).contains("correlation"),
        "stderr should mention the correlation, got: {}",
        stderr_of(&output)
    );
}

// ---------------------------------------------------------------------------
// simulate

#[test]
fn simulate_writes_grid_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sim.json", EXPONENTIAL_CONFIG);
    let output = excursor(
        &["simulate", "--config", &config, "--out", "path.csv"],
        dir.path(),
    );
    assert_success(&output, "simulate");
    let path = read(dir.path(), "path.csv");
    let lines: Vec<&str> = path.lines().collect();
    assert_eq!(
        lines.len(),
        1002,
        "[0, 100] at mesh 0.1 is 1001 grid points plus a header"
    );
    assert_eq!(lines[0], "t_1,value");
    assert!(
        !path.contains('\r'),
        "path CSV must use bare LF line endings"
    );
    let manifest = read(dir.path(), "path.csv.manifest.json");
    let parsed: serde_json::Value =
        serde_json::from_str(&manifest).expect("manifest is not valid JSON");
    assert_eq!(parsed["tool"], "excursor");
    assert_eq!(parsed["command"], "simulate");
    assert_eq!(parsed["master_seed"], 7);
    assert_eq!(parsed["config"]["mesh"], 0.1);
}

#[test]
fn simulate_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "sim.json", EXPONENTIAL_CONFIG);
    for out in ["a.csv", "b.csv"] {
        let output = excursor(
            &["simulate", "--config", &config, "--out", out],
            dir.path(),
        );
        assert_success(&output, "simulate");
    }
    assert_eq!(
        read(dir.path(), "a.csv"),
        read(dir.path(), "b.csv"),
        "same config and seed must reproduce the path byte-for-byte"
    );
    let output = excursor(
        &[
            "simulate",
            "--config",
            &config,
            "--out",
            "c.csv",
            "--seed",
            "8",
        ],
        dir.path(),
    );
    assert_success(&output, "simulate with --seed");
    assert_ne!(
        read(dir.path(), "a.csv"),
        read(dir.path(), "c.csv"),
        "a different seed must change the sampled path"
    );
}

#[test]
fn simulate_rejects_malformed_config_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "bad.json", "{\"model\": nonsense");
    let output = excursor(
        &["simulate", "--config", &config, "--out", "path.csv"],
        dir.path(),
    );
    assert_exit_code(&output, 2, "simulate with malformed JSON");
    assert!(
        !dir.path().join("path.csv").exists(),
        "no output may be written on a failed run"
    );
    assert!(
        !dir.path().join("path.csv.manifest.json").exists(),
        "no manifest may be written on a failed run"
    );
}

#[test]
fn simulate_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "extra.json",
        r#"{
  "model": {"kind": "exponential", "sigma2": 1.0, "length_scale": 10.0},
  "marginal": {"mu": 0.0, "sigma": 1.0},
  "window": [[0.0, 10.0]],
  "mesh": 0.1,
  "seed": 7,
  "typo_field": true
}"#,
    );
    let output = excursor(
        &["simulate", "--config", &config, "--out", "path.csv"],
        dir.path(),
    );
    assert_exit_code(&output, 2, "simulate with an unknown config field");
}

// ---------------------------------------------------------------------------
// predict

const PREDICT_CONFIG: &str = r#"{
  "model": {"kind": "exponential", "sigma2": 1.0, "length_scale": 10.0},
  "marginal": {"mu": 0.0, "sigma": 1.0},
  "window": [[0.0, 30.0]],
  "eval_mesh": 1.0,
  "methods": ["levelset_unknown_mean", "levelset_known_mean", "simple_kriging", "ordinary_kriging"]
}"#;

/// Splits a prediction CSV into (t, method, prediction) triples.
fn parse_predictions(csv: &str) -> Vec<(f64, String, f64)> {
    csv.lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 6, "prediction row should have 6 fields: {line}");
            (
                fields[0].parse::<f64>().unwrap(),
                fields[1].to_string(),
                fields[2].parse::<f64>().unwrap(),
            )
        })
        .collect()
}

#[test]
fn predict_consumes_simulated_paths_and_interpolates_observations() {
    let dir = tempfile::tempdir().unwrap();
    let sim_config = write(
        dir.path(),
        "sim.json",
        r#"{
  "model": {"kind": "exponential", "sigma2": 1.0, "length_scale": 10.0},
  "marginal": {"mu": 0.0, "sigma": 1.0},
  "window": [[0.0, 30.0]],
  "mesh": 10.0,
  "seed": 3
}"#,
    );
    let output = excursor(
        &["simulate", "--config", &sim_config, "--out", "obs.csv"],
        dir.path(),
    );
    assert_success(&output, "simulate for predict");
    let obs = read(dir.path(), "obs.csv");
    let observed: Vec<(f64, f64)> = obs
        .lines()
        .skip(1)
        .map(|line| {
            let (t, v) = line.split_once(',').unwrap();
            (t.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(observed.len(), 4, "[0, 30] at mesh 10 is 4 observations");

    let config = write(dir.path(), "pred.json", PREDICT_CONFIG);
    let output = excursor(
        &["predict", "obs.csv", "--config", &config, "--out", "pred.csv"],
        dir.path(),
    );
    assert_success(&output, "predict");
    let rows = parse_predictions(&read(dir.path(), "pred.csv"));
    assert_eq!(
        rows.len(),
        31 * 4,
        "31 grid points x 4 methods prediction rows"
    );
    // Every method must reproduce the observed value at observation sites.
    for (t_obs, value) in &observed {
        for (t, method, prediction) in &rows {
            if t == t_obs {
                assert!(
                    (prediction - value).abs() <= 1e-8,
                    "{method} at observed t = {t}: predicted {prediction}, observed {value}"
                );
            }
        }
    }
}

#[test]
fn predict_single_observation_unknown_mean_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "one.csv", "t_1,value\n12.0,0.73\n");
    let config = write(dir.path(), "pred.json", PREDICT_CONFIG);
    let output = excursor(
        &[
            "predict",
            "one.csv",
            "--config",
            &config,
            "--out",
            "pred.csv",
            "--methods",
            "levelset_unknown_mean",
        ],
        dir.path(),
    );
    assert_success(&output, "predict with one observation");
    let csv = read(dir.path(), "pred.csv");
    let rows = parse_predictions(&csv);
    assert_eq!(rows.len(), 31);
    for (t, _, prediction) in &rows {
        assert_eq!(
            *prediction, 0.73,
            "with one observation the mean-constrained predictor is X(t_1) at t = {t}"
        );
    }
    for line in csv.lines().skip(1) {
        assert!(
            line.ends_with(",collinear_with_ones"),
            "single-observation rows must be flagged degenerate: {line}"
        );
    }
}

#[test]
fn predict_rejects_duplicate_observation_locations() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "dup.csv",
        "t_1,value\n0.0,0.5\n10.0,-0.2\n10.0,0.7\n",
    );
    let config = write(dir.path(), "pred.json", PREDICT_CONFIG);
    let output = excursor(
        &["predict", "dup.csv", "--config", &config, "--out", "pred.csv"],
        dir.path(),
    );
    assert_exit_code(&output, 4, "predict with a repeated location");
    assert!(
        !dir.path().join("pred.csv").exists(),
        "no output may be written on a failed run"
    );
}

#[test]
fn predict_rejects_malformed_observation_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "t_1,value\n0.0,abc\n");
    let config = write(dir.path(), "pred.json", PREDICT_CONFIG);
    let output = excursor(
        &["predict", "bad.csv", "--config", &config, "--out", "pred.csv"],
        dir.path(),
    );
    assert_exit_code(&output, 2, "predict with a non-numeric value field");
}

// ---------------------------------------------------------------------------
// evaluate

#[test]
fn evaluate_reports_symmetric_difference_per_level() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "truth.csv",
        "t_1,value\n0.0,0.2\n0.5,1.5\n1.0,-0.3\n",
    );
    write(
        dir.path(),
        "pred.csv",
        "t_1,value\n0.0,0.2\n0.5,-0.1\n1.0,0.4\n",
    );
    let output = excursor(
        &[
            "evaluate",
            "truth.csv",
            "pred.csv",
            "--levels",
            "0",
            "--out",
            "err.csv",
        ],
        dir.path(),
    );
    assert_success(&output, "evaluate");
    assert_eq!(
        stdout_of(&output).trim(),
        "1.0000000000000000e0",
        "two disagreeing cells of width 0.5 have total volume 1"
    );
    assert_eq!(
        read(dir.path(), "err.csv"),
        "level,sym_diff\n0.0000000000000000e0,1.0000000000000000e0\n"
    );
}

#[test]
fn evaluate_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "truth.csv",
        "t_1,value\n0.0,0.2\n0.5,1.5\n1.0,-0.3\n",
    );
    write(
        dir.path(),
        "pred.csv",
        "t_1,value\n0.0,0.2\n0.5,-0.1\n1.0,0.4\n",
    );
    let output = excursor(
        &[
            "evaluate",
            "truth.csv",
            "pred.csv",
            "--levels",
            "-2,-1,0,1,2",
            "--out",
            "err.csv",
        ],
        dir.path(),
    );
    assert_success(&output, "evaluate with five levels");
    let err = read(dir.path(), "err.csv");
    assert_eq!(err.lines().count(), 6, "header plus one row per level");
}

#[test]
fn evaluate_identical_paths_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "truth.csv",
        "t_1,value\n0.0,0.2\n0.5,1.5\n1.0,-0.3\n",
    );
    let output = excursor(
        &[
            "evaluate",
            "truth.csv",
            "truth.csv",
            "--levels",
            "-1,0,1",
            "--out",
            "err.csv",
        ],
        dir.path(),
    );
    assert_success(&output, "evaluate on identical paths");
    assert_eq!(stdout_of(&output).trim(), "0.0000000000000000e0");
}

#[test]
fn evaluate_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "truth.csv",
        "t_1,value\n0.0,0.2\n0.5,1.5\n1.0,-0.3\n",
    );
    write(
        dir.path(),
        "shifted.csv",
        "t_1,value\n0.0,0.2\n0.6,1.5\n1.0,-0.3\n",
    );
    let output = excursor(
        &[
            "evaluate",
            "truth.csv",
            "shifted.csv",
            "--levels",
            "0",
            "--out",
            "err.csv",
        ],
        dir.path(),
    );
    assert_exit_code(&output, 5, "evaluate with differing coordinates");
    assert!(!dir.path().join("err.csv").exists());
}

// ---------------------------------------------------------------------------
// study

const STUDY_CONFIG: &str = r#"{
  "model": {"kind": "exponential", "sigma2": 1.0, "length_scale": 10.0},
  "marginal": {"mu": 0.0, "sigma": 1.0},
  "window": [[0.0, 20.0]],
  "obs_mesh": 5.0,
  "eval_mesh": 1.0,
  "levels": [-1.0, 0.0, 1.0],
  "methods": ["levelset_unknown_mean", "ordinary_kriging"],
  "replications": 6,
  "master_seed": 99
}"#;

const STUDY_FILES: [&str; 4] = ["raw.csv", "summary.csv", "variance.csv", "mse.csv"];

fn run_study_into(dir: &Path, config: &str, out: &str, extra: &[&str]) {
    let mut args = vec!["study", "--config", config, "--out", out];
    args.extend_from_slice(extra);
    let output = excursor(&args, dir);
    assert_success(&output, "study");
}

#[test]
fn study_writes_all_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "study.json", STUDY_CONFIG);
    run_study_into(dir.path(), &config, "out", &[]);
    for name in STUDY_FILES {
        assert!(
            dir.path().join("out").join(name).exists(),
            "study must write {name}"
        );
    }
    let raw = read(dir.path(), "out/raw.csv");
    assert_eq!(
        raw.lines().count(),
        1 + 6 * 2 * 3,
        "raw.csv: header + replications x methods x levels"
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "out/manifest.json")).unwrap();
    assert_eq!(manifest["command"], "study");
    assert_eq!(manifest["master_seed"], 99);
}

#[test]
fn study_is_thread_count_invariant_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "study.json", STUDY_CONFIG);
    run_study_into(dir.path(), &config, "serial", &["--threads", "1"]);
    run_study_into(dir.path(), &config, "parallel", &["--threads", "4"]);
    for name in STUDY_FILES {
        assert_eq!(
            read(dir.path(), &format!("serial/{name}")),
            read(dir.path(), &format!("parallel/{name}")),
            "{name} must not depend on the worker thread count"
        );
    }
    run_study_into(dir.path(), &config, "reseeded", &["--seed", "100"]);
    assert_ne!(
        read(dir.path(), "serial/raw.csv"),
        read(dir.path(), "reseeded/raw.csv"),
        "a different master seed must change the raw errors"
    );
    assert_eq!(
        read(dir.path(), "serial/mse.csv"),
        read(dir.path(), "reseeded/mse.csv"),
        "the analytical mse curve does not depend on the seed"
    );
}

#[test]
fn study_manifest_config_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "study.json", STUDY_CONFIG);
    run_study_into(dir.path(), &config, "first", &[]);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "first/manifest.json")).unwrap();
    let replay_config = write(
        dir.path(),
        "replay.json",
        &serde_json::to_string(&manifest["config"]).unwrap(),
    );
    run_study_into(dir.path(), &replay_config, "second", &[]);
    for name in STUDY_FILES {
        assert_eq!(
            read(dir.path(), &format!("first/{name}")),
            read(dir.path(), &format!("second/{name}")),
            "{name} must replay byte-identically from the manifest config"
        );
    }
}

#[test]
fn study_method_and_level_overrides_shape_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "study.json", STUDY_CONFIG);
    run_study_into(
        dir.path(),
        &config,
        "out",
        &["--methods", "simple_kriging", "--levels", "0,0.5"],
    );
    let raw = read(dir.path(), "out/raw.csv");
    assert_eq!(
        raw.lines().count(),
        1 + 6 * 2,
        "overrides reduce raw.csv to replications x 1 method x 2 levels"
    );
    assert!(
        raw.lines().skip(1).all(|l| l.contains(",simple_kriging,")),
        "only the overridden method may appear"
    );
}

#[test]
fn study_rejects_zero_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "study.json", STUDY_CONFIG);
    let output = excursor(
        &["study", "--config", &config, "--out", "out", "--threads", "0"],
        dir.path(),
    );
    assert_exit_code(&output, 2, "study with --threads 0");
}
