use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fanova(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fanova"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// Synthetic CSV plus a trained model in `dir`.
fn trained(dir: &Path, d: usize) -> (String, String) {
    let data = path(dir, "train.csv");
    let model = path(dir, "model.json");
    let ds = d.to_string();
    let out = fanova(&[
        "synth", "--id", "1", "--n", "40", "--d", &ds, "--seed", "3", "--out", &data,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = fanova(&[
        "train",
        "--data",
        &data,
        "--out",
        &model,
        "--measure",
        "standard-normal",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (data, model)
}

fn read_json(p: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&fanova(&[])), 1);
    assert_eq!(code(&fanova(&["frobnicate"])), 1);
    assert_eq!(code(&fanova(&["synth", "--id", "1"])), 1);
    assert_eq!(code(&fanova(&["--help"])), 0);
    assert_eq!(code(&fanova(&["--version"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "missing.csv");
    let out = fanova(&["train", "--data", &missing, "--out", &path(dir.path(), "m.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error: "));

    let bad = path(dir.path(), "bad.csv");
    fs::write(&bad, "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n").unwrap();
    let out = fanova(&["train", "--data", &bad, "--out", &path(dir.path(), "m.json")]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("oops") || stderr(&out).contains("row"),
        "{}",
        stderr(&out)
    );

    let out = fanova(&["synth", "--id", "9", "--n", "10", "--out", &path(dir.path(), "s.csv")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn numerical_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "huge.csv");
    fs::write(&data, "a,y\n1,1e300\n2,-1e300\n3,1e300\n").unwrap();
    let out = fanova(&[
        "train",
        "--data",
        &data,
        "--out",
        &path(dir.path(), "m.json"),
        "--no-standardize",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn model_version_mismatch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = trained(dir.path(), 3);
    let text = fs::read_to_string(&model)
        .unwrap()
        .replace("fanova-gp/v1", "fanova-gp/v0");
    fs::write(&model, text).unwrap();
    let out = fanova(&["explain-global", "--model", &model]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn row_out_of_range_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = trained(dir.path(), 3);
    let out = fanova(&["explain-local", "--model", &model, "--rows", "400"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn local_explanations_follow_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = trained(dir.path(), 4);
    let out_path = path(dir.path(), "local.json");
    let out = fanova(&[
        "explain-local",
        "--model",
        &model,
        "--rows",
        "0,5,7",
        "--dominance",
        "2000",
        "--out",
        &out_path,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&out_path);
    let items = v.as_array().unwrap();
    assert_eq!(items.len(), 3);
    for e in items {
        for key in [
            "query",
            "mean",
            "covariance",
            "posterior_mean",
            "constant",
            "efficiency_residual",
            "dominance",
        ] {
            assert!(e.get(key).is_some(), "missing {key}");
        }
        assert_eq!(e["mean"].as_array().unwrap().len(), 4);
        assert_eq!(e["covariance"].as_array().unwrap().len(), 4);
        assert!(e["efficiency_residual"].as_f64().unwrap().abs() <= 1e-6);
        let dom = e["dominance"].as_array().unwrap();
        for (i, row) in dom.iter().enumerate() {
            assert_eq!(row[i].as_f64().unwrap(), 1.0);
        }
    }
}

#[test]
fn query_file_matches_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = trained(dir.path(), 3);
    let text = fs::read_to_string(&data).unwrap();
    let lines: Vec<&str> = text.lines().take(2).collect();
    let queries = path(dir.path(), "q.csv");
    fs::write(&queries, format!("{}\n{}\n", lines[0], lines[1])).unwrap();
    let a = fanova(&["explain-local", "--model", &model, "--queries", &queries]);
    let b = fanova(&["explain-local", "--model", &model, "--rows", "0"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn global_explanation_follows_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = trained(dir.path(), 3);
    let out = fanova(&["explain-global", "--model", &model, "--mc-samples", "2000"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["attribution", "shares", "total", "mc_check"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let attr: Vec<f64> = v["attribution"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_f64().unwrap())
        .collect();
    let total = v["total"].as_f64().unwrap();
    assert!((attr.iter().sum::<f64>() - total).abs() <= 1e-10 * total.abs().max(1.0));
    let low = fanova(&[
        "explain-global",
        "--model",
        &model,
        "--mc-samples",
        "2000",
        "--low-memory",
    ]);
    let w: Value = serde_json::from_slice(&low.stdout).unwrap();
    for (a, b) in attr.iter().zip(w["attribution"].as_array().unwrap()) {
        assert!((a - b.as_f64().unwrap()).abs() <= 1e-12 * total.abs().max(1.0));
    }
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = path(dir.path(), "a.csv");
    let b = path(dir.path(), "b.csv");
    let c = path(dir.path(), "c.csv");
    for (p, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = fanova(&[
            "synth", "--id", "4", "--n", "30", "--d", "6", "--seed", seed, "--out", p,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 7);
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn rank_eval_reports_ranks() {
    let out = fanova(&[
        "rank-eval",
        "--id",
        "1",
        "--n",
        "60",
        "--d",
        "4",
        "--instances",
        "5",
        "--search-budget",
        "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["truth"], serde_json::json!([1, 2]));
    assert_eq!(v["report"]["per_instance"].as_array().unwrap().len(), 5);
}

#[test]
fn benchmark_naive_time_grows_faster() {
    let out = fanova(&["benchmark", "--dims", "8,12,16", "--n", "200"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("d,fast_seconds,naive_seconds"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1), "{rows:?}");
    let growth = (rows[2].1 / rows[2].0) / (rows[0].1 / rows[0].0);
    assert!(growth >= 10.0, "{growth}");
}

#[test]
fn benchmark_marks_skipped_dimensions() {
    let out = fanova(&[
        "benchmark",
        "--dims",
        "6,30",
        "--n",
        "50",
        "--naive-ceiling",
        "10",
        "--repeats",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(2).unwrap().starts_with("30,"));
    assert!(text.lines().nth(2).unwrap().ends_with(",skipped"));
}
