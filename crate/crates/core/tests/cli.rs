use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn tampa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tampa")).args(args).output().unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    if !dir.exists() {
        return BTreeMap::new();
    }
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn line_scenario(symmetric: bool) -> Value {
    let back = if symmetric { 100.0 } else { 120.0 };
    json!({
        "name": "line",
        "nodes": [{"id": 1, "x": 0.0, "y": 0.0}, {"id": 2, "x": 100.0, "y": 0.0}],
        "edges": [
            {"from": 1, "to": 2, "length": 100.0, "mtt": 2.0},
            {"from": 2, "to": 1, "length": back, "mtt": 2.0}
        ],
        "start": 1,
        "horizon": 60,
        "tau": 4,
        "complaints": {"weights": {"background": 3.0}}
    })
}

#[test]
fn validate_describes_the_bundled_scenario() {
    let o = tampa(&["validate", "--scenario", "flatbush12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("12 nodes, 19 edge pairs, start 5"), "{text}");
}

#[test]
fn simulate_is_reproducible_and_carries_provenance() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = dir.path().display().to_string();
        let o = tampa(&["simulate", "--seeds", "3", "--strategy", "tampa", "--out", &out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));
    assert_eq!(
        fa.keys().cloned().collect::<Vec<_>>(),
        ["metrics_tampa_seed3.json", "trajectory_tampa_seed3.csv"]
    );
    let csv = String::from_utf8(fa["trajectory_tampa_seed3.csv"].clone()).unwrap();
    assert!(csv.starts_with("# {\"provenance\""));
    let first: Value = serde_json::from_str(csv.lines().next().unwrap().trim_start_matches('#').trim()).unwrap();
    assert_eq!(first["provenance"]["seed"], json!(3));
    let metrics: Value = serde_json::from_slice(&fa["metrics_tampa_seed3.json"]).unwrap();
    assert_eq!(metrics["provenance"]["config"]["strategies"], json!(["tampa"]));
}

#[test]
fn any_output_reproduces_its_run() {
    let first = tempfile::tempdir().unwrap();
    let out = first.path().display().to_string();
    let o = tampa(&["simulate", "--seeds", "5", "--strategy", "random", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again = tempfile::tempdir().unwrap();
    for source in ["metrics_random_seed5.json", "trajectory_random_seed5.csv"] {
        let config = first.path().join(source).display().to_string();
        let o = tampa(&["simulate", "--config", &config, "--out", &again.path().display().to_string()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(files(first.path()), files(again.path()), "from {source}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    write_json(&config, &json!({"seeds": [1, 2], "strategies": ["stationary"], "formats": ["json"]}));
    let out = dir.path().join("out");
    let o = tampa(&[
        "simulate",
        "--config",
        &config.display().to_string(),
        "--seeds",
        "4",
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(files(&out).keys().cloned().collect::<Vec<_>>(), ["metrics_stationary_seed4.json"]);
}

#[test]
fn sweep_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = tampa(&[
        "sweep", "--seeds", "1-2", "--param", "lambda", "--values", "0,0.5,1", "--format", "json", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let written = files(dir.path());
    assert_eq!(written.len(), 3, "{:?}", written.keys());
    let mut lambdas: Vec<f64> = written
        .iter()
        .map(|(name, bytes)| {
            assert!(name.starts_with("sweep_lambda_") && name.ends_with(".json"), "{name}");
            let v: Value = serde_json::from_slice(bytes).unwrap();
            v["provenance"]["config"]["planner"]["lambda"].as_f64().unwrap()
        })
        .collect();
    lambdas.sort_by(f64::total_cmp);
    assert_eq!(lambdas, [0.0, 0.5, 1.0]);
}

#[test]
fn invalid_parameters_exit_one_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    write_json(&config, &json!({"planner": {"lambda": 2.0}}));
    let out = dir.path().join("out");
    let o = tampa(&["compare", "--config", &config.display().to_string(), "--out", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));
    assert!(!out.exists());

    for args in [
        vec!["simulate", "--strategy", "greedy"],
        vec!["patrol"],
        vec!["simulate", "--seeds", "x-y"],
        vec!["sweep", "--values", "1,2"],
    ] {
        let mut args = args.clone();
        let o_str = out.display().to_string();
        args.extend(["--out", &o_str]);
        let o = tampa(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!out.exists(), "{args:?}");
    }
}

#[test]
fn scenario_problems_exit_one_and_name_the_cause() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("skew.json");
    write_json(&path, &line_scenario(false));
    let o = tampa(&["validate", "--scenario", &path.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("1 -> 2") && err.contains("reverse length"), "{err}");

    let missing = dir.path().join("nowhere.json").display().to_string();
    let o = tampa(&["validate", "--scenario", &missing]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.json"), "{}", stderr(&o));

    let ok = dir.path().join("line.json");
    write_json(&ok, &line_scenario(true));
    let o = tampa(&["validate", "--scenario", &ok.display().to_string()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub").display().to_string();
    let o = tampa(&["simulate", "--seeds", "1", "--strategy", "random", "--out", &out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn custom_scenarios_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("line.json");
    write_json(&path, &line_scenario(true));
    let out = dir.path().join("out");
    let o = tampa(&[
        "compare",
        "--scenario",
        &path.display().to_string(),
        "--seeds",
        "1-4",
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let written = files(&out);
    let report: Value = serde_json::from_slice(&written["comparison.json"]).unwrap();
    assert_eq!(report["strategies"].as_array().unwrap().len(), 3);
    let csv = String::from_utf8(written["comparison_cumulative_q.csv"].clone()).unwrap();
    assert!(csv.starts_with("# {\"provenance\""));
    assert!(csv.lines().count() > 2);
}
