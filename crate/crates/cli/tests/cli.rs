use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nonholo_core::scenarios::builtin_json;
use serde_json::{json, Value};
use tempfile::TempDir;

fn nonholo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// The particle scenario with extra entries merged in, written to `dir`.
fn particle_variant(dir: &Path, file: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(builtin_json("nonholonomic_particle").unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(file);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_particle_writes_csv_and_summary() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("run.csv");
    let out = nonholo(&[
        "simulate",
        "--builtin",
        "nonholonomic_particle",
        "--t-end",
        "10",
        "--step",
        "1e-3",
        "--output",
        p(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,q_1,q_2,q_3,u_1,u_2,u_3,v_1,v_2,v_3,E,lambda_1,u_y"
    );
    assert_eq!(lines.count(), 10_001);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.csv.summary.json")).unwrap()).unwrap();
    assert!(summary["energy_drift"]["value"].as_f64().unwrap() <= 1e-8);
    assert!(summary["constraint_drift"]["value"].as_f64().unwrap() <= 1e-6);
    assert!(summary["monitor_drifts"]["u_y"]["value"].as_f64().unwrap() <= 1e-8);
    assert_eq!(summary["verdict"], "pass");
}

#[test]
fn simulate_json_format_to_stdout() {
    let out = nonholo(&[
        "simulate",
        "--builtin",
        "chaplygin_sleigh",
        "--t-end",
        "0.01",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["trajectory"]["rows"].as_array().unwrap().len(), 11);
    assert_eq!(v["trajectory"]["columns"][0], "t");
    assert_eq!(v["summary"]["scenario"], "chaplygin_sleigh");
}

#[test]
fn usage_and_io_errors() {
    let out = nonholo(&["simulate", "--builtin", "nonholonomic_particle", "--step", "0"]);
    assert_eq!(code(&out), 2);
    let out = nonholo(&["simulate", "--scenario", "missing.json"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = nonholo(&["simulate", "--builtin", "nonholonomic_particle", "--scenario", "x.json"]);
    assert_eq!(code(&out), 2);
    let out = nonholo(&["simulate"]);
    assert_eq!(code(&out), 2);
    let out = nonholo(&["frame", "--builtin", "no_such_system"]);
    assert_eq!(code(&out), 2);
    let out = nonholo(&["frame", "--builtin", "nonholonomic_particle", "--samples", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn schema_errors_report_pointers() {
    let dir = TempDir::new().unwrap();
    let path = particle_variant(dir.path(), "bad.json", |v| {
        v["fields"]["broken"] = json!(["1", "sin(", "0"])
    });
    let out = nonholo(&["frame", "--scenario", p(&path)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/fields/broken/1"));
}

#[test]
fn numeric_failures_exit_four() {
    let dir = TempDir::new().unwrap();
    let path = particle_variant(dir.path(), "singular.json", |v| {
        v["lagrangian"]["metric"][2][2] = json!("0");
    });
    let out = nonholo(&["frame", "--scenario", p(&path)]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn noether_commands() {
    let out = nonholo(&[
        "noether",
        "momentum_y",
        "--builtin",
        "nonholonomic_particle",
        "--samples",
        "64",
    ]);
    assert_eq!(code(&out), 0);
    let r = stdout_json(&out);
    assert_eq!(
        (r["command"].as_str(), r["scenario"].as_str()),
        (Some("noether"), Some("nonholonomic_particle"))
    );
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["extra"]["reaction_annihilator"]["verdict"], "pass");
    assert!(r["drift"]["momentum"]["max_drift"].as_f64().unwrap() <= 1e-8);

    let dir = TempDir::new().unwrap();
    let path = particle_variant(dir.path(), "x.json", |v| {
        v["fields"]["momentum_x"] = json!(["1", "0", "0"])
    });
    let out = nonholo(&["noether", "momentum_x", "--scenario", p(&path), "--samples", "64"]);
    assert_eq!(code(&out), 1);
    let r = stdout_json(&out);
    assert_eq!(r["conditions"]["complete_lift"]["verdict"], "pass");
    assert_eq!(r["conditions"]["reaction"]["verdict"], "fail");

    let out = nonholo(&["noether", "nope", "--builtin", "nonholonomic_particle"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn integral_commands() {
    for name in ["A", "energy", "u_y"] {
        let out = nonholo(&[
            "integral",
            name,
            "--builtin",
            "nonholonomic_particle",
            "--samples",
            "64",
        ]);
        assert_eq!(code(&out), 0, "{name}");
        assert_eq!(stdout_json(&out)["verdict"], "pass");
    }
    let dir = TempDir::new().unwrap();
    let path = particle_variant(dir.path(), "t.json", |v| {
        v["tensors"]["B"] = json!({"degree": 2, "components": {"1,1": "1 + x*y", "1,2": "0.3*z", "2,2": "2 - sin(x)"}});
    });
    let out = nonholo(&["integral", "B", "--scenario", p(&path), "--samples", "64"]);
    assert_eq!(code(&out), 1);
    let r = stdout_json(&out);
    assert!(r["conditions"]["parallel"]["max_residual"].as_f64().unwrap() >= 1e-3);
    assert_eq!(r["drift"]["psi"]["verdict"], "fail");

    let out = nonholo(&["integral", "B", "--builtin", "nonholonomic_particle"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn frame_reports_ranks_and_kernel() {
    let cases = [
        ("nonholonomic_particle", 1, json!([2, 3])),
        ("unconstrained_general", 0, json!([3])),
        ("integrable_plane", 1, json!([2, 2])),
    ];
    for (name, kernel, flag) in cases {
        let out = nonholo(&["frame", "--builtin", name, "--samples", "64"]);
        assert_eq!(code(&out), 0, "{name}");
        let r = stdout_json(&out);
        assert_eq!(r["extra"]["kernel_dimension"], json!(kernel), "{name}");
        assert_eq!(r["extra"]["derived_flag"], flag, "{name}");
    }
}

#[test]
fn csv_report_format() {
    let out = nonholo(&[
        "integral",
        "energy",
        "--builtin",
        "integrable_plane",
        "--samples",
        "16",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("kind,name,max_residual,mean_residual,tolerance,verdict\n"));
    assert!(text.lines().any(|l| l.starts_with("drift,integral,")));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let csv = dir.path().join(format!("run{k}.csv"));
        let json = dir.path().join(format!("noether{k}.json"));
        assert_eq!(
            code(&nonholo(&[
                "simulate",
                "--builtin",
                "magnetic_particle",
                "--t-end",
                "2",
                "--seed",
                "9",
                "--output",
                p(&csv)
            ])),
            0
        );
        assert_eq!(
            code(&nonholo(&[
                "noether",
                "momentum_y",
                "--builtin",
                "nonholonomic_particle",
                "--seed",
                "9",
                "--samples",
                "32",
                "--output",
                p(&json)
            ])),
            0
        );
        outputs.push([
            std::fs::read(&csv).unwrap(),
            std::fs::read(dir.path().join(format!("run{k}.csv.summary.json"))).unwrap(),
            std::fs::read(&json).unwrap(),
        ]);
    }
    assert_eq!(outputs[0], outputs[1]);
}
