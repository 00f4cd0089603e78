//! End-to-end checks of the command binary: artifact layout, exit codes,
//! config overrides, and meta.json reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collapselab"))
}

fn write_json(path: &Path, value: serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

fn solve_config() -> serde_json::Value {
    serde_json::json!({
        "command": "solve",
        "seed": 1,
        "instance": {
            "d0": 2,
            "a0": {"kind": "diagonal", "values": [1.0, 1.0]},
            "c": {"kind": "diagonal", "values": [0.0, 4.0]},
            "loss": {"family": "beta_infonce", "beta": 0.5}
        }
    })
}

#[test]
fn solve_writes_solutions_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(&cfg, solve_config());
    let out = tmp.path().join("out");
    let status = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("solutions.csv").exists());
    assert!(out.join("meta.json").exists());
    let csv = fs::read_to_string(out.join("solutions.csv")).unwrap();
    assert!(csv.starts_with("mask,rank,loss,local_min,eigenvalues\r\n"));
    // The masked solution of this instance has loss -1/4.
    assert!(csv.contains("-0.25"));
}

#[test]
fn malformed_field_exits_two_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(
        &cfg,
        serde_json::json!({
            "command": "sweep:phase_diagram",
            "sweep": { "theta_values": [0.0, 1.5] }
        }),
    );
    let output = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("theta_values") && stderr.contains("1.5"),
        "diagnostic should name the field: {stderr}"
    );
}

#[test]
fn unknown_key_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(&cfg, serde_json::json!({ "command": "solve", "bogus": true }));
    let status = bin()
        .args(["--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_three_with_error_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    // Zero Sigma makes the solver fail after a valid configuration.
    write_json(
        &cfg,
        serde_json::json!({
            "command": "solve",
            "instance": {
                "d0": 2,
                "a0": {"kind": "diagonal", "values": [0.0, 0.0]},
                "c": {"kind": "zero"},
                "loss": {"family": "infonce"}
            }
        }),
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    let err: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("singular"));
}

#[test]
fn sweep_meta_reproduces_results_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(
        &cfg,
        serde_json::json!({
            "command": "sweep:critical_n",
            "seed": 4,
            "sweep": { "n_values": [18, 20, 22, 23, 25], "a_values": [1.0, 1.0] }
        }),
    );
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    assert_eq!(
        bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    for name in ["results.csv", "meta.json", "plot.svg"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    assert_eq!(
        bin()
            .args([
                "--config",
                out_a.join("meta.json").to_str().unwrap(),
                "--out",
                out_b.to_str().unwrap()
            ])
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    assert_eq!(
        fs::read(out_a.join("results.csv")).unwrap(),
        fs::read(out_b.join("results.csv")).unwrap()
    );
}

#[test]
fn set_overrides_reach_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(&cfg, solve_config());
    let out = tmp.path().join("out");
    // Tip the entropy weight to 1.0: the augmented mode must survive, so
    // the full-rank stationary point appears.
    let status = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--set",
            "instance.loss.beta=1.0",
            "--seed",
            "9",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("solutions.csv")).unwrap();
    assert!(csv.contains("11,2,"), "full mask missing: {csv}");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["instance"]["loss"]["beta"], serde_json::json!(1.0));
    assert_eq!(meta["seed"], serde_json::json!(9));
}

#[test]
fn help_documents_config_keys_with_defaults() {
    let output = bin().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&output.stdout);
    for key in [
        "command",
        "out_dir",
        "sigma_values",
        "theta_values",
        "proportions",
        "grad_tol",
        "half_range",
        "COLLAPSELAB_THREADS",
        "default",
    ] {
        assert!(text.contains(key), "--help missing `{key}`");
    }
}

#[test]
fn train_and_verify_commands_work() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(
        &cfg,
        serde_json::json!({
            "command": "verify",
            "seed": 5,
            "instance": {
                "d0": 2,
                "a0": {"kind": "identity"},
                "c": {"kind": "isotropic", "sigma": 1.0},
                "loss": {"family": "infonce"}
            },
            "trainer": { "optimizer": "gd", "lr": 0.05, "max_iters": 60000, "grad_tol": 1e-10 }
        }),
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "verification should pass");
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verification.json")).unwrap()).unwrap();
    assert_eq!(verdict["pass"], serde_json::json!(true));

    // Train alone writes the trajectory.
    write_json(
        &cfg,
        serde_json::json!({
            "command": "train",
            "seed": 5,
            "instance": {
                "d0": 2,
                "a0": {"kind": "identity"},
                "c": {"kind": "isotropic", "sigma": 1.0},
                "loss": {"family": "infonce"}
            },
            "trainer": { "max_iters": 300 }
        }),
    );
    let out2 = tmp.path().join("out2");
    assert_eq!(
        bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()])
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let traj = fs::read_to_string(out2.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("iter,loss,grad_norm,eig_0,eig_1\r\n"));
}

#[test]
fn slice_command_classifies_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(
        &cfg,
        serde_json::json!({
            "command": "slice",
            "instance": {
                "d0": 2,
                "a0": {"kind": "diagonal", "values": [1.0, 0.5]},
                "c": {"kind": "isotropic", "sigma": 0.3},
                "loss": {"family": "infonce"}
            },
            "slice": { "kind": "two_d", "points_per_side": 6 }
        }),
    );
    let out = tmp.path().join("out");
    let output = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("local_max"), "stdout: {stdout}");
    assert!(out.join("plot.svg").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["derived"]["origin_class"], serde_json::json!("local_max"));
}

#[test]
fn predict_reports_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    write_json(
        &cfg,
        serde_json::json!({
            "command": "predict",
            "instance": {
                "d0": 3,
                "a0": {"kind": "identity"},
                "c": {"kind": "diagonal", "values": [0.0, 1.0, 4.0]},
                "loss": {"family": "beta_infonce", "beta": 0.5}
            }
        }),
    );
    let out = tmp.path().join("out");
    assert_eq!(
        bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let csv = fs::read_to_string(out.join("collapse.csv")).unwrap();
    assert!(csv.starts_with("mode,a,c,b,collapses,pressure,drive\r\n"));
    assert_eq!(csv.matches("true").count(), 1); // only c = 4 collapses
}
