use std::path::Path;
use std::process::{Command, Output};

fn tsad(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsad"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TSAD_OUTPUT_DIR")
        .env_remove("TSAD_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SPEC: &str = r#"{"entities": [
    {"id": "e1", "n_train": 400, "n_test": 300, "m": 3, "periods": [20, 35, 50],
     "noise_sigma": 0.05, "seed": 1,
     "events": [{"start": 100, "length": 10, "causes": [1], "kind": "spike", "magnitude": 4}]}
]}"#;

fn run_config(dataset: &str, extra: &str) -> String {
    format!(
        r#"{{"dataset": {dataset}, "model": {{"kind": "pca"}},
            "scoring": {{"kind": "gauss_d", "window": 30}},
            "threshold": {{"method": "top_k"}}, "diagnosis": {{}}{extra}}}"#
    )
}

#[test]
fn generate_then_run_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let o = tsad(&["generate", "--config", "spec.json", "--out", "data"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["e1_train.csv", "e1_test.csv", "e1_causes.json", "dataset.json"] {
        assert!(dir.path().join("data").join(f).exists(), "missing {f}");
    }
    let dataset = std::fs::read_to_string(dir.path().join("data/dataset.json")).unwrap();
    std::fs::write(dir.path().join("data/run.json"), run_config(&dataset, "")).unwrap();
    let o = tsad(
        &["run", "--config", "data/run.json", "--out", "res", "--seed", "0,1", "--format", "csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();
    assert!(csv.starts_with("entity,seed,status,metric,value"));
    assert!(csv.lines().any(|l| l.starts_with("e1,1,ok,fc1,")));
    assert!(dir.path().join("res/metadata.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall"));
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    assert_eq!(code(&tsad(&["run", "--config", "bad.json"], dir.path())), 1);

    let unknown = run_config(r#"{"synthetic": {"entities": []}}"#, r#", "bogus": 1"#);
    std::fs::write(dir.path().join("unknown.json"), unknown).unwrap();
    assert_eq!(code(&tsad(&["run", "--config", "unknown.json"], dir.path())), 1);

    // the second entity is shorter than the autoencoder window
    let partial = format!(
        r#"{{"dataset": {}, "model": {{"kind": "uae", "max_epochs": 1}}, "window": {{"l_w": 20, "l_s": 5}},
            "scoring": {{"kind": "gauss_s"}}, "threshold": {{"method": "top_k"}}}}"#,
        r#"{"synthetic": {"entities": [
            {"id": "ok", "n_train": 300, "n_test": 200, "m": 2, "periods": [20, 30], "noise_sigma": 0.05, "seed": 1,
             "events": [{"start": 50, "length": 5, "causes": [0], "kind": "spike", "magnitude": 4}]},
            {"id": "short", "n_train": 10, "n_test": 200, "m": 2, "periods": [20, 30], "noise_sigma": 0.05, "seed": 2,
             "events": [{"start": 50, "length": 5, "causes": [0], "kind": "spike", "magnitude": 4}]}
        ]}}"#
    );
    std::fs::write(dir.path().join("partial.json"), partial).unwrap();
    let o = tsad(&["run", "--config", "partial.json", "--out", "p"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(dir.path().join("p/results.json")).unwrap();
    assert!(results.contains("\"failed\""));
}

#[test]
fn environment_overrides_output_dir_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let spec = std::fs::read_to_string(dir.path().join("spec.json")).unwrap();
    std::fs::write(dir.path().join("c.json"), run_config(&format!(r#"{{"synthetic": {spec}}}"#), "")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tsad"))
        .args(["run", "--config", "c.json"])
        .current_dir(dir.path())
        .env("TSAD_OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("from_env/results.json").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_tsad"))
        .args(["run", "--config", "c.json", "--out", "from_flag"])
        .current_dir(dir.path())
        .env("TSAD_OUTPUT_DIR", "from_env2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("from_flag/results.json").exists());
    assert!(!dir.path().join("from_env2").exists());
}

#[test]
fn compare_metrics_reports_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("labels.csv"),
        "label,detector\n0,0\n0,0\n1,1\n1,0\n0,0\n0,0\n1,0\n1,0\n0,1\n0,0\n",
    )
    .unwrap();
    let o = tsad(&["compare-metrics", "labels.csv", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["name"], "detector");
    assert_eq!(rows[0]["fc1"], 0.5);
    assert_eq!(rows[0]["fpa1"], 4.0 / 7.0);

    let o = tsad(&["compare-metrics", "labels.csv", "--truth-column", "nope"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn rank_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let table = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/method_scores.csv");
    let o = tsad(&["rank", table.to_str().unwrap(), "--out", "r"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/rank.json")).unwrap()).unwrap();
    assert_eq!(v[0]["best"], "UAE");
    let post_hoc = v[0]["post_hoc"].as_array().unwrap();
    assert_eq!(post_hoc.len(), 12);
    assert_eq!(post_hoc.iter().filter(|p| p["rejected"] == true).count(), 6);

    let o = tsad(&["rank", table.to_str().unwrap(), "--format", "csv"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("method,average_rank"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("friedman statistic"));

    assert_eq!(code(&tsad(&["rank", "missing.csv"], dir.path())), 1);
}

#[test]
fn diagnose_ranks_cause_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,c,label\n");
    for t in 0..20 {
        let in_event = (5..8).contains(&t);
        let b = if in_event { 9.0 } else { 0.1 };
        csv.push_str(&format!("0.2,{b},0.3,{}\n", u8::from(in_event)));
    }
    std::fs::write(dir.path().join("scores.csv"), csv).unwrap();
    std::fs::write(dir.path().join("causes.json"), r#"{"0": ["b"]}"#).unwrap();
    let o = tsad(
        &["diagnose", "--scores", "scores.csv", "--causes", "causes.json", "--top-k", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["events"][0]["ranked_channels"][0], "b");
    assert_eq!(v[0]["rc_top_k"], 1.0);

    std::fs::write(dir.path().join("bad_causes.json"), r#"{"0": ["zzz"]}"#).unwrap();
    let o = tsad(&["diagnose", "--scores", "scores.csv", "--causes", "bad_causes.json"], dir.path());
    assert_eq!(code(&o), 1);
}
