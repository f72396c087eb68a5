use std::path::Path;
use std::process::{Command, Output};

use fecap_readsim::config::{parse_config, Experiment};
use tempfile::TempDir;

fn run(dir: &Path, verb: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fecap-readsim"))
        .arg(verb)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn hysteresis_writes_trace_with_units() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        "hysteresis",
        r#"{"experiment": {"type": "hysteresis", "periods": 1, "points_per_period": 200}}"#,
        &["--out", "res"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("res/hysteresis.csv")).unwrap();
    assert!(text.starts_with("t_s,v_V,P_uC_cm2,C_fF\r\n"));
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn manifest_echo_reloads_to_the_same_config() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        "yield",
        r#"{"device": {"v_bias": -0.021}, "experiment": {"type": "yield", "n_trials": 4}}"#,
        &["--seed", "99", "--out", "res"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("res/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 99);
    assert_eq!(manifest["temperature_c"], 27.0);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    let echo = serde_json::to_string(&manifest["config"]).unwrap();
    let reloaded = parse_config(&echo).unwrap();
    assert_eq!(reloaded.master_seed, 99);
    assert_eq!(reloaded.device.v_bias, -0.021);
    assert!(matches!(reloaded.experiment, Some(Experiment::Yield(ref y)) if y.n_trials == 4));
    assert_eq!(serde_json::to_value(&reloaded).unwrap(), manifest["config"]);
}

#[test]
fn every_header_names_a_unit_or_count() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        "sweep",
        r#"{"experiment": {"type": "sweep", "v_reads": [0.1, 0.2], "n_trials": 3}}"#,
        &["--out", "res"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let unitless = ["trial_id", "written_bit", "read_bit", "device_seed", "sa_seed", "error", "bit", "n_trials", "n_correct", "n_failed", "count"];
    for entry in std::fs::read_dir(tmp.path().join("res")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let text = std::fs::read_to_string(&path).unwrap();
            for column in text.lines().next().unwrap().split(',') {
                assert!(column.contains('_') || unitless.contains(&column), "{}: `{column}`", path.display());
                assert!(
                    unitless.contains(&column) || ["_V", "_mV", "_fF", "_1", "_s", "_uC_cm2"].iter().any(|u| column.ends_with(u)),
                    "{}: `{column}` lacks a unit",
                    path.display()
                );
            }
        }
    }
}

#[test]
fn results_stay_inside_the_output_dir() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        "disturb",
        r#"{"experiment": {"type": "disturb", "v_reads": [0.1], "n_reads": 3}, "output_dir": "nested/res"}"#,
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut top: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["config.json", "nested"]);
    let files: Vec<_> = std::fs::read_dir(tmp.path().join("nested/res")).unwrap().collect();
    assert_eq!(files.len(), 3);
}

#[test]
fn attack_report_carries_detection_fields() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        "attack",
        r#"{"experiment": {"type": "attack", "attacker_v_read": 0.3, "population": 2, "max_reads": 3,
            "monitor": {"v_read_band": [0.09, 0.11], "action": "log"}}}"#,
        &["--out", "res"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("res/attack_report.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let field = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(field("detected"), "true");
    assert_eq!(field("detection_read"), "1");
    assert_eq!(field("applied_v_read_V"), "0.3");
}

#[test]
fn same_seed_same_bytes() {
    let tmp = TempDir::new().unwrap();
    let config = r#"{"experiment": {"type": "yield", "n_trials": 10}}"#;
    assert!(run(tmp.path(), "yield", config, &["--out", "a"]).status.success());
    assert!(run(tmp.path(), "yield", config, &["--out", "b", "--threads", "3"]).status.success());
    for file in ["yield_trials.csv", "yield_summary.csv", "yield_histogram.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(file)).unwrap(),
            std::fs::read(tmp.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), "yield", r#"{"device": {"ps": 27}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("did you mean `p_s`"), "{}", stderr(&out));

    let out = run(tmp.path(), "yield", r#"{"device": {"p_s": -5}, "circuit": {"vcm": 3}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("device.p_s") && err.contains("circuit.vcm"), "{err}");

    let out = run(tmp.path(), "attack", r#"{"experiment": {"type": "yield"}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        "disturb",
        r#"{"circuit": {"solver_max_iter": 1, "solver_tol": 1e-30},
            "experiment": {"type": "disturb", "v_reads": [0.4], "n_reads": 2}}"#,
        &["--out", "res"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn unwritable_output_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("blocker"), "").unwrap();
    let out = run(
        tmp.path(),
        "hysteresis",
        r#"{"experiment": {"type": "hysteresis", "periods": 1, "points_per_period": 40}}"#,
        &["--out", "blocker/res"],
    );
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn calibrate_writes_a_loadable_default_config() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), "calibrate", "{}", &["--out", "res"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("res/calibrated_config.json")).unwrap();
    let config = parse_config(&text).unwrap();
    assert_eq!(config.device, fecap_core::DeviceParams::default());
    assert!(config.experiment.is_none());
}

#[test]
fn golden_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = fecap_readsim::config::load_config(&path).unwrap();
        fecap_readsim::config::validate(&config).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 9);
}
