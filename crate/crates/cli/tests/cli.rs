use std::path::PathBuf;
use std::process::{Command, Output};

use estimand_lab::report::parse_weights_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_estimand-lab"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn decompose_prints_negative_top_weight() {
    let f = fixture("binomial3_shift");
    let o = run(&["decompose", "--dgp", f.to_str().unwrap(), "--kind", "long"]);
    assert!(o.status.success());
    let rows = parse_weights_csv(&stdout(&o)).unwrap();
    let (_, w, _) = rows.iter().find(|r| r.0 == vec![3]).unwrap();
    assert!((w + 0.41).abs() < 0.005);
}

#[test]
fn decompose_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("binomial2_inter");
    let o = run(&[
        "decompose", "--dgp", f.to_str().unwrap(), "--kind", "sat", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("binomial2_inter_sat.json")).unwrap(),
    )
    .unwrap();
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for (i, r) in reports.iter().enumerate() {
        let dce = r["contrasts"]["dce"][i].as_f64().unwrap();
        assert!((r["estimand"].as_f64().unwrap() - dce).abs() < 1e-12);
    }
    assert!(dir.path().join("binomial2_inter_sat.csv").exists());
}

#[test]
fn malformed_config_exits_two_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"actions": [[0, 1]], "p_treat": 1.5, "mu": {"affine": {}}}"#).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "decompose", "--dgp", bad.to_str().unwrap(), "--kind", "long", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    std::fs::write(&bad, r#"{"actions": [[0, 1]], "p_treat": 0.5, "mu": {"affine": {}}, "extra": 1}"#)
        .unwrap();
    assert_eq!(run(&["check", "--dgp", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn singular_design_exits_three() {
    let f = fixture("two_binary");
    let o = run(&["decompose", "--dgp", f.to_str().unwrap(), "--kind", "inter"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn one_point_sweep_matches_decompose() {
    let f = fixture("binomial3_shift");
    let f = f.to_str().unwrap();
    let sw = run(&["sweep", "--dgp", f, "--kind", "long", "--grid", "0.8:0.8:0.1"]);
    assert!(sw.status.success());
    let de = run(&["decompose", "--dgp", f, "--kind", "long"]);
    let a = parse_weights_csv(&stdout(&de)).unwrap();
    let text = stdout(&sw);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("0.8,")).collect();
    assert_eq!(rows.len(), a.len());
    for (row, (_, dce, ind)) in rows.iter().zip(&a) {
        let f: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[2], *dce);
        assert_eq!(f[3], ind.unwrap());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let f = fixture("bernoulli2_long");
    let f = f.to_str().unwrap();
    for args in [
        vec!["decompose", "--dgp", f, "--kind", "long"],
        vec!["sweep", "--dgp", f, "--kind", "inter", "--grid", "0.1:0.9:0.1"],
        vec!["search", "--kind", "long", "--k", "2", "--support", "3", "--trials", "50", "--seed", "4"],
        vec!["simulate", "--dgp", f, "--n", "1000", "--reps", "5", "--seed", "6"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn check_passes_on_fixtures() {
    for name in ["binomial3_shift", "binomial2_long", "bernoulli2_long", "two_binary", "binomial2_star"] {
        let o = run(&["check", "--dgp", fixture(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}");
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn search_writes_replayable_hits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "search", "--kind", "long", "--support", "4", "--trials", "2000", "--seed", "1",
        "--max-dump", "3", "--out", d,
    ]);
    assert!(o.status.success());
    let hits: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("hit_"))
        .collect();
    assert!(!hits.is_empty() && hits.len() <= 3);
    let o = run(&["decompose", "--dgp", hits[0].to_str().unwrap(), "--kind", "long"]);
    let rows = parse_weights_csv(&stdout(&o)).unwrap();
    assert!(rows.iter().any(|r| r.1 < 0.0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["trials"], 2000);
}

#[test]
fn simulate_reports_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("binomial2_long");
    let o = run(&[
        "simulate", "--dgp", f.to_str().unwrap(), "--n", "5000", "--reps", "10", "--seed", "2",
        "--z-bound", "1e9", "--dataset", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("binomial2_long_simulate.json")).unwrap(),
    )
    .unwrap();
    assert!(!v["entries"].as_array().unwrap().is_empty());
    let sample = std::fs::read_to_string(dir.path().join("binomial2_long_sample.csv")).unwrap();
    assert_eq!(sample.lines().next().unwrap(), "y,d,a1");
    assert_eq!(sample.lines().count(), 5001);
}
