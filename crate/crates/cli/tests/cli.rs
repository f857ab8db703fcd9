use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spreadsamp"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn exam1(dir: &Path) {
    let pi = [0.7, 0.3, 0.4, 0.8, 0.3, 0.65, 0.45, 0.2, 0.2];
    let mut text = String::from("id,x,y,pi\n");
    for (i, p) in pi.iter().enumerate() {
        text.push_str(&format!("{},{},0,{p}\n", i + 1, i + 1));
    }
    std::fs::write(dir.join("exam1.csv"), text).unwrap();
}

#[test]
fn gfs_sample_of_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    exam1(dir.path());
    let o = run(dir.path(), &["sample", "--pop", "exam1.csv", "--design", "gfs", "--r", "0.5", "--bars", "bars.csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "id\n1\n4\n5\n7\n");
    let bars = std::fs::read_to_string(dir.path().join("bars.csv")).unwrap();
    assert_eq!(bars.lines().count(), 12);
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(d, &["gen-pop", "--layout", "random", "--n", "6", "--seed", "3", "--out", "pop.csv"]).status.success());
    let a = run(d, &["search", "--pop", "pop.csv", "--iterations", "10", "--seed", "2", "--design-out", "best.json"]);
    let b = run(d, &["search", "--pop", "pop.csv", "--iterations", "10", "--seed", "2"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).starts_with("iteration,best_score,popped_score,queue_size\n"));
    let s1 = run(d, &["sample", "--pop", "pop.csv", "--from-design", "best.json", "--r", "0.3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&s1.stdout).unwrap();
    let ids: Vec<String> = v["sample"].as_array().unwrap().iter().map(|i| i.to_string()).collect();
    assert_eq!(ids.len(), 6);
    let idx = run(d, &["index", "--pop", "pop.csv", "--sample", &ids.join(","), "--index", "VI,BI"]);
    assert!(idx.status.success());
    let rows: Vec<String> = stdout(&idx).lines().map(String::from).collect();
    assert_eq!(rows[0], "index,value");
    let vi: f64 = rows[1].strip_prefix("VI,").unwrap().parse().unwrap();
    let bi: f64 = rows[2].strip_prefix("BI,").unwrap().parse().unwrap();
    assert!((bi * bi - vi).abs() < 1e-12);
}

#[test]
fn cluster_json_totals_are_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(d, &["gen-pop", "--n", "4", "--probability", "up-gradient", "--out", "pop.csv"]);
    let o = run(d, &["cluster", "--pop", "pop.csv", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for t in v["totals"].as_array().unwrap() {
        assert!((t.as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"population": {"layout": {"kind": "halton"}, "size": 50, "probability": {"kind": "ep", "n": 5}},
            "designs": ["srs", "gfs-random", "nms"], "sample_sizes": [5], "replicates": 4,
            "indices": ["MI", "BI"], "output_dir": "ignored"}"#,
    )
    .unwrap();
    let o = run(d, &["simulate", "--config", "cfg.json", "--out", "sim"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("sim/indices_n5.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3 * 2);
    assert!(d.join("sim/summary.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    exam1(d);
    assert_eq!(run(d, &["index", "--pop", "exam1.csv", "--sample", "0,1"]).status.code(), Some(2));
    assert_eq!(run(d, &["index", "--pop", "exam1.csv", "--sample", "1,12", "--index", "VI"]).status.code(), Some(2));
    assert_eq!(run(d, &["sample", "--pop", "exam1.csv", "--r", "1.5"]).status.code(), Some(2));
    assert_eq!(run(d, &["sample", "--pop", "missing.csv"]).status.code(), Some(1));
    assert_eq!(run(d, &["gen-pop", "--n", "200", "--size", "100"]).status.code(), Some(2));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(2));
    std::fs::write(d.join("bad.json"), "{}").unwrap();
    assert_eq!(run(d, &["simulate", "--config", "bad.json"]).status.code(), Some(2));
    // MI is undefined when the sample is the whole population, so every row is NaN.
    std::fs::write(
        d.join("full.json"),
        r#"{"population": {"layout": {"kind": "gridded"}, "size": 4, "probability": {"kind": "ep", "n": 4}},
            "designs": ["srs"], "sample_sizes": [4], "replicates": 2, "indices": ["MI"], "output_dir": "full"}"#,
    )
    .unwrap();
    assert_eq!(run(d, &["simulate", "--config", "full.json"]).status.code(), Some(3));
}
