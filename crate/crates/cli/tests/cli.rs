//! CLI surface tests: config strictness, exit codes, artifact formats, and
//! snapshot-driven runs.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_graphflow")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn list_scenarios_prints_catalogue() {
    let (code, stdout, _) = run(&["list-scenarios"]);
    assert_eq!(code, 0);
    for name in [
        "zero",
        "affine",
        "scherk",
        "sphere_cap",
        "lo_cone",
        "small_bump",
        "random_area_decreasing",
        "torus_bump",
    ] {
        assert!(stdout.contains(name), "catalogue missing {name}");
    }
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"spec_version":"1","scenario":{"name":"zero"},"grid":{"resolution":9},"typo_key":1}"#,
    );
    let (code, _, stderr) = run(&[
        "run-flow",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("typo_key"), "stderr: {stderr}");
}

#[test]
fn wrong_spec_version_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"spec_version":"2","scenario":{"name":"zero"},"grid":{"resolution":9}}"#,
    );
    let (code, _, stderr) = run(&[
        "run-flow",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("spec_version"));
}

#[test]
fn verify_affine_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"spec_version":"1","scenario":{"name":"affine"},"grid":{"resolution":9},
            "verify":{"resolutions":[9,17,33]}}"#,
    );
    let out = dir.path().join("o");
    let (code, stdout, _) = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("PASS residual_refinement"));
    let report = std::fs::read_to_string(out.join("verify_report.json")).unwrap();
    assert!(report.contains("\"pass\":true"));
    assert!(report.contains("\"refinement_rows\":["));
}

#[test]
fn solve_zero_data_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"spec_version":"1","scenario":{"name":"zero"},"grid":{"resolution":9}}"#,
    );
    let out = dir.path().join("o");
    let (code, _, _) = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report = std::fs::read_to_string(out.join("picard_report.json")).unwrap();
    assert!(report.contains("\"converged\":true"));
    assert!(out.join("solution.csv").exists());
}

#[test]
fn snapshot_driven_run_matches_scenario_run() {
    let dir = tempfile::tempdir().unwrap();
    // 1. scenario-driven run, which also writes the initial data snapshot
    let cfg1 = dir.path().join("direct.json");
    write(
        &cfg1,
        r#"{"spec_version":"1","scenario":{"name":"small_bump"},"grid":{"resolution":17},
            "flow":{"t_max":0.05,"residual_tol":1e-13,"record_every":5}}"#,
    );
    let out1 = dir.path().join("direct");
    let (code, _, _) = run(&[
        "run-flow",
        "--config",
        cfg1.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    // 2. write ψ to a snapshot and drive the same run from the file
    use graphflow_core::scenarios::{make_scenario, ScenarioParams};
    let s = make_scenario("small_bump", &ScenarioParams::default()).unwrap();
    let g = s.make_grid(17).unwrap();
    let psi = s.sample(&g).unwrap();
    let snap_path = dir.path().join("psi.csv");
    let mut buf = Vec::new();
    psi.write_snapshot(&mut buf).unwrap();
    std::fs::write(&snap_path, &buf).unwrap();

    let cfg2 = dir.path().join("snap.json");
    write(
        &cfg2,
        &format!(
            r#"{{"spec_version":"1","psi_snapshot":{},
                 "grid":{{"resolution":17,"box":[[0.0,1.0],[0.0,1.0]]}},
                 "flow":{{"t_max":0.05,"residual_tol":1e-13,"record_every":5}}}}"#,
            serde_json::to_string(snap_path.to_str().unwrap()).unwrap()
        ),
    );
    let out2 = dir.path().join("snap");
    let (code, _, stderr) = run(&[
        "run-flow",
        "--config",
        cfg2.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");

    let m1 = std::fs::read(out1.join("monitors.csv")).unwrap();
    let m2 = std::fs::read(out2.join("monitors.csv")).unwrap();
    assert_eq!(m1, m2, "snapshot-driven run diverged from the direct run");
}

#[test]
fn threads_env_fallback_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"spec_version":"1","scenario":{"name":"zero"},"grid":{"resolution":9}}"#,
    );
    let out = Command::new(bin())
        .args([
            "run-flow",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .env("GRAPHFLOW_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn analyze_writes_density_and_rescale_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"spec_version":"1","scenario":{"name":"zero"},"grid":{"resolution":33},
            "analysis":{
              "density":{"center":[0.5,0.5,0.0],"radii":[0.2,0.3]},
              "rescale":{"x0":[0.5,0.5],"lambdas":[0.5,2.0],
                         "target":{"resolution":9,"box":[[-0.2,0.2],[-0.2,0.2]]}}}}"#,
    );
    let out = dir.path().join("o");
    let (code, _, stderr) = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let density = std::fs::read_to_string(out.join("density.csv")).unwrap();
    assert!(density.starts_with("r,sigma,err\n"));
    assert!(out.join("rescale_0.csv").exists());
    assert!(out.join("rescale_1.csv").exists());
}

#[test]
fn blow_up_exits_nonzero_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // data far outside the admissible gradient regime
    write(
        &cfg,
        r#"{"spec_version":"1","scenario":{"name":"small_bump","amplitude":8.0},
            "grid":{"resolution":17},"flow":{"t_max":0.5}}"#,
    );
    let out = dir.path().join("o");
    let (code, _, stderr) = run(&[
        "run-flow",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "stderr: {stderr}");
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"outcome\":\"blow_up\""));
    assert!(summary.contains("\"blow_up\":"));
}
