use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pocdetect"));
    cmd.env_remove("POCDETECT_WORKERS");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn pocdetect")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Small generated corpus, injected and ingested.
fn pipeline() -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--seed", "3", "--cards", "3000", "--terminals", "300", "--weeks", "8", "--out", "gen"]);
    ok(d, &[
        "inject", "--input", "gen/transactions.csv", "--seed", "7", "--p", "0.1", "--pocs", "6",
        "--min-poc-cards", "60", "--out", "inj",
    ]);
    ok(d, &["ingest", "--input", "inj/transactions.csv", "--out", "g"]);
    let root = d.to_path_buf();
    (tmp, root)
}

#[test]
fn end_to_end_pipeline() {
    let (_tmp, d) = pipeline();
    ok(&d, &["detect", "--graph", "g/graph.bin", "--alpha", "0.2", "--beta", "15", "--epsilon", "1e-6", "--out", "det"]);
    for f in ["locations.csv", "convergence.csv", "timings.csv", "manifest.json"] {
        assert!(d.join("det").join(f).exists(), "{f}");
    }
    let locations = fs::read_to_string(d.join("det/locations.csv")).unwrap();
    let mut lines = locations.lines();
    assert_eq!(lines.next(), Some("location_key,theta,z,n_neighbors,n_fraud_neighbors"));
    let thetas: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(thetas.windows(2).all(|w| w[0] >= w[1]));

    let m = manifest(&d.join("det"));
    assert_eq!(m["command"], "detect");
    let graph_digest = m["inputs"]["g/graph.bin"].as_str().unwrap();
    assert_eq!(graph_digest, manifest(&d.join("g"))["outputs"]["graph.bin"].as_str().unwrap());
    assert_eq!(m["settings"]["prior"]["beta"], 15.0);
    assert!(m["outputs"].get("timings.csv").is_none());

    ok(&d, &["eval", "--graph", "g/graph.bin", "--truth", "inj/ground_truth.json", "--method", "breachradar", "--method", "ratio", "--out", "ev"]);
    assert!(d.join("ev/breachradar_p0.1_noise0_seed7_curve.csv").exists());
    assert!(d.join("ev/ratio_p0.1_noise0_seed7_curve.csv").exists());
    let summary: Value = serde_json::from_slice(&fs::read(d.join("ev/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["methods"].as_array().unwrap().len(), 2);
    assert_eq!(summary["methods"][0]["method"], "breachradar");
}

#[test]
fn baselines_share_the_locations_schema() {
    let (_tmp, d) = pipeline();
    for method in ["ratio", "ratio-prior", "vertex-cover", "fabp"] {
        let out = format!("bl-{method}");
        ok(&d, &["baseline", "--graph", "g/graph.bin", "--method", method, "--out", &out]);
        let text = fs::read_to_string(d.join(&out).join("locations.csv")).unwrap();
        let second = text.lines().nth(1).unwrap();
        assert_eq!(second.split(',').nth(2), Some(""), "{method}: z column should be empty");
    }
    let refused = run(&d, &["baseline", "--graph", "g/graph.bin", "--method", "breachradar", "--out", "x"]);
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn inject_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--seed", "1", "--cards", "2000", "--terminals", "200", "--weeks", "6", "--out", "gen"]);
    for out in ["a", "b"] {
        ok(d, &[
            "inject", "--input", "gen/transactions.csv", "--p", "0.1", "--noise", "1.0", "--seed", "7",
            "--pocs", "4", "--min-poc-cards", "40", "--out", out,
        ]);
    }
    for f in ["transactions.csv", "ground_truth.json", "manifest.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn blames_respect_minimum() {
    let (_tmp, d) = pipeline();
    ok(&d, &["detect", "--graph", "g/graph.bin", "--blames", "--min-blame", "0.25", "--out", "det"]);
    let text = fs::read_to_string(d.join("det/blames.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("card_id,location_key,blame"));
    let rows: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|&b| (0.25..=1.0).contains(&b)));
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // seeds are mandatory
    assert_eq!(run(d, &["generate", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(d, &["detect", "--graph", "g.bin", "--out", "x", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(d, &["detect", "--graph", "g.bin", "--out", "x", "--alpha", "-1"]).status.code(), Some(1));
    assert_eq!(run(d, &[]).status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert!(!d.join("x").exists());
}

#[test]
fn data_errors_exit_2_and_leave_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let missing = run(d, &["ingest", "--input", "nope.csv", "--out", "g"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    fs::write(
        d.join("bad.csv"),
        "card_id,terminal_id,timestamp,amount,is_fraud\nc1,t1,2014-03-03T10:00:00Z,100,1\nc2,t1,2014-03-03T11:00:00Z,-5,0\n",
    )
    .unwrap();
    let bad = run(d, &["ingest", "--input", "bad.csv", "--out", "g"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));
    assert!(!d.join("g").exists());

    fs::write(d.join("wrong.csv"), "card,terminal\nc1,t1\n").unwrap();
    assert_eq!(run(d, &["ingest", "--input", "wrong.csv", "--out", "g"]).status.code(), Some(2));

    // ground truth that is not JSON: eval fails after creating the directory
    let (_keep, p) = pipeline();
    fs::write(p.join("truth.json"), "{").unwrap();
    let out = run(&p, &["eval", "--graph", "g/graph.bin", "--truth", "truth.json", "--out", "ev"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!p.join("ev").exists());
}

#[test]
fn strict_non_convergence_exits_3() {
    let (_tmp, d) = pipeline();
    let lenient = run(&d, &["detect", "--graph", "g/graph.bin", "--max-iter", "2", "--out", "a"]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning"));
    let strict = run(&d, &["detect", "--graph", "g/graph.bin", "--max-iter", "2", "--strict", "--out", "b"]);
    assert_eq!(strict.status.code(), Some(3));
    assert_eq!(manifest(&d.join("b"))["summary"]["converged"], false);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let (_tmp, d) = pipeline();
    fs::write(d.join("run.conf"), "# detector prior\nalpha = 1.5\nbeta = 4\nblames = true\n").unwrap();
    ok(&d, &["detect", "--config", "run.conf", "--graph", "g/graph.bin", "--beta", "9", "--out", "det"]);
    let m = manifest(&d.join("det"));
    assert_eq!(m["settings"]["prior"]["alpha"], 1.5);
    assert_eq!(m["settings"]["prior"]["beta"], 9.0);
    assert_eq!(m["settings"]["prior"]["epsilon"], 1e-6);
    assert!(d.join("det/blames.csv").exists());

    fs::write(d.join("bad.conf"), "alpha 1.5\n").unwrap();
    assert_eq!(run(&d, &["detect", "--config", "bad.conf", "--graph", "g/graph.bin", "--out", "x"]).status.code(), Some(1));
}

#[test]
fn worker_count_from_environment() {
    let (_tmp, d) = pipeline();
    let out = bin()
        .current_dir(&d)
        .env("POCDETECT_WORKERS", "3")
        .args(["detect", "--graph", "g/graph.bin", "--out", "w3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest(&d.join("w3"))["settings"]["workers"], 3);
    let timings = fs::read_to_string(d.join("w3/timings.csv")).unwrap();
    assert!(timings.starts_with("iteration,superstep,worker_count,millis\n"));
    assert!(timings.lines().skip(1).all(|l| l.split(',').nth(2) == Some("3")));

    ok(&d, &["detect", "--graph", "g/graph.bin", "--workers", "1", "--out", "w1"]);
    let rank = |dir: &str| -> Vec<String> {
        fs::read_to_string(d.join(dir).join("locations.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    assert_eq!(rank("w1"), rank("w3"));
}

#[test]
fn savings_and_bench_outputs() {
    let (_tmp, d) = pipeline();
    ok(&d, &["savings", "--input", "inj/transactions.csv", "--threshold", "0.05", "--out", "sav"]);
    let report: Value = serde_json::from_slice(&fs::read(d.join("sav/savings.json")).unwrap()).unwrap();
    let totals = &report["totals"];
    assert_eq!(
        totals["net_savings"].as_i64().unwrap(),
        totals["fraud_prevented"].as_i64().unwrap() - totals["reissue_cost"].as_i64().unwrap()
    );

    ok(&d, &["bench", "--edges", "2000,6000", "--workers", "1,2", "--iterations", "2", "--repeats", "1", "--out", "bench"]);
    let scaling = fs::read_to_string(d.join("bench/scaling.csv")).unwrap();
    assert_eq!(scaling.lines().count(), 5);
    assert!(d.join("bench/timings_e6000_w2.csv").exists());
}
