use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lnlm::benchgen::{toy_graphs, two_cliques_labels};
use serde_json::Value;
use tempfile::TempDir;

fn lnlm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lnlm"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_fixture(dir: &Path, name: &str) -> PathBuf {
    let g = toy_graphs().remove(name).unwrap();
    let path = dir.join(format!("{name}.txt"));
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn two_cliques(dir: &Path) -> (PathBuf, PathBuf) {
    let graph = write_fixture(dir, "two_cliques");
    let labels = dir.join("two_cliques.labels");
    let text: String = two_cliques_labels()
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{i} {c}\n"))
        .collect();
    fs::write(&labels, text).unwrap();
    (graph, labels)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn embed_writes_documented_format_reproducibly() {
    let dir = TempDir::new().unwrap();
    write_fixture(dir.path(), "k3");
    let args = ["embed", "--input", "k3.txt", "--dim-k", "2", "--output", "a.emb", "--trace", "a.csv"];
    let out = lnlm(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("a.emb")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "3 2");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(' ').count() == 3));

    let trace = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let mut trace_lines = trace.lines();
    let echo = trace_lines.next().unwrap().strip_prefix("# config: ").unwrap();
    let config: Value = serde_json::from_str(echo).unwrap();
    assert_eq!(config["model"]["solver"]["k"], 2);
    assert_eq!(config["model"]["solver"]["alpha"], 50.0);
    assert_eq!(trace_lines.next(), Some("iter,loss"));

    let out = lnlm(&["embed", "--input", "k3.txt", "--dim-k", "2", "--output", "b.emb"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(dir.path().join("a.emb")).unwrap(), fs::read(dir.path().join("b.emb")).unwrap());
}

#[test]
fn missing_input_exits_two_and_names_path() {
    let dir = TempDir::new().unwrap();
    let out = lnlm(&["embed", "--input", "no_such_graph.txt", "--output", "x"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_graph.txt"));
}

#[test]
fn bad_flags_and_numeric_failures_use_distinct_codes() {
    let dir = TempDir::new().unwrap();
    write_fixture(dir.path(), "k3");
    let out = lnlm(&["embed", "--input", "k3.txt", "--alpha", "abc", "--output", "x"], dir.path());
    assert_eq!(code(&out), 2);
    let out = lnlm(&["embed", "--input", "k3.txt", "--alpha", "-1", "--output", "x"], dir.path());
    assert_eq!(code(&out), 2);
    let out = lnlm(&["embed", "--input", "k3.txt", "--alpha", "1e300", "--output", "x"], dir.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cluster_on_two_cliques_recovers_them() {
    let dir = TempDir::new().unwrap();
    two_cliques(dir.path());
    let args = ["eval-cluster", "--input", "two_cliques.txt", "--labels", "two_cliques.labels", "--output", "r.json"];
    let out = lnlm(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("cluster: nmi=1.000000"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    for key in ["task", "params", "metrics", "repeats", "per_repeat"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["task"], "cluster");
    assert_eq!(report["metrics"]["nmi"], 1.0);
    assert_eq!(report["repeats"], 10);
    assert_eq!(report["params"]["config"]["model"]["solver"]["delta"], 1e-4);
    assert_eq!(report["params"]["config"]["protocol"]["restarts"], 10);
}

#[test]
fn linkpred_with_oracle_hook_scores_one() {
    let dir = TempDir::new().unwrap();
    write_fixture(dir.path(), "two_cliques");
    let args = ["eval-linkpred", "--input", "two_cliques.txt", "--scorer", "oracle", "--fraction", "0.1,0.3", "--repeats", "3"];
    let out = lnlm(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["metrics"]["auc@0.1"], 1.0);
    assert_eq!(report["metrics"]["auc@0.3"], 1.0);
    assert_eq!(report["params"]["scoring"], "oracle");
}

#[test]
fn linkpred_on_disconnected_graph_needs_lcc_flag() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("g.txt"), "0 1\n1 2\n0 2\n2 3\n3 0\n10 11\n").unwrap();
    let base = ["eval-linkpred", "--input", "g.txt", "--scorer", "common-neighbors", "--fraction", "0.3", "--repeats", "1"];
    assert_eq!(code(&lnlm(&base, dir.path())), 2);
    let mut with_flag = base.to_vec();
    with_flag.push("--restrict-lcc");
    let out = lnlm(&with_flag, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn classify_without_test_nodes_exits_two() {
    let dir = TempDir::new().unwrap();
    two_cliques(dir.path());
    let args = ["eval-classify", "--input", "two_cliques.txt", "--labels", "two_cliques.labels", "--train-ratio", "1.0"];
    assert_eq!(code(&lnlm(&args, dir.path())), 2);
    fs::write(dir.path().join("one.labels"), "3 0\n").unwrap();
    let args = ["eval-classify", "--input", "two_cliques.txt", "--labels", "one.labels"];
    assert_eq!(code(&lnlm(&args, dir.path())), 2);
}

#[test]
fn classify_reports_f1() {
    let dir = TempDir::new().unwrap();
    two_cliques(dir.path());
    let args = ["eval-classify", "--input", "two_cliques.txt", "--labels", "two_cliques.labels", "--repeats", "3"];
    let out = lnlm(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["task"], "classify");
    let micro = report["metrics"]["micro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&micro));
    assert_eq!(report["params"]["config"]["protocol"]["train_ratio"], 0.7);
}

fn sweep_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "sweep", "--task", "cluster", "--input", "two_cliques.txt", "--labels", "two_cliques.labels",
        "--repeats", "2", "--max-iter", "200",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn sweep_grid_rows_and_paper_range() {
    let dir = TempDir::new().unwrap();
    two_cliques(dir.path());
    let out = lnlm(&sweep_args(&["--alpha", "1,50", "--beta", "20,30", "--output", "s.csv"]), dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("s.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(&header[..8], ["cell", "seed", "alpha", "beta", "gamma", "m", "window", "status"]);
    assert_eq!(header.last().unwrap(), "config");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
        assert_eq!(row[1], i.to_string());
        assert_eq!(&row[7], "ok");
        let config: Value = serde_json::from_str(&row[row.len() - 1]).unwrap();
        assert_eq!(config["model"]["solver"]["seed"], i);
    }

    let out = lnlm(&sweep_args(&["--alpha", "1,50,101", "--output", "p.csv"]), dir.path());
    assert_eq!(code(&out), 0);
    let mut reader = csv::Reader::from_path(dir.path().join("p.csv")).unwrap();
    let statuses: Vec<String> = reader.records().map(|r| r.unwrap()[7].to_string()).collect();
    assert_eq!(statuses, ["ok", "ok", "ok"]);
}

#[test]
fn sweep_is_identical_across_jobs_and_resumes() {
    let dir = TempDir::new().unwrap();
    two_cliques(dir.path());
    let grid = ["--alpha", "10,50", "--gamma", "5,20"];
    let run = |out: &str, jobs: &str| {
        let mut extra = grid.to_vec();
        extra.extend(["--output", out, "--jobs", jobs]);
        let o = lnlm(&sweep_args(&extra), dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run("serial.csv", "1");
    run("parallel.csv", "3");
    let serial = fs::read_to_string(dir.path().join("serial.csv")).unwrap();
    assert_eq!(serial, fs::read_to_string(dir.path().join("parallel.csv")).unwrap());

    // Simulate an interruption after two cells: drop the later rows and log
    // entries, and mark a kept row so recomputation would be visible.
    let lines: Vec<&str> = serial.lines().collect();
    let marked = lines[1].replacen(",ok,", ",ok-kept,", 1);
    fs::write(dir.path().join("serial.csv"), format!("{}\n{}\n{}\n", lines[0], marked, lines[2])).unwrap();
    let log = fs::read_to_string(dir.path().join("serial.csv.done")).unwrap();
    let log_lines: Vec<&str> = log.lines().collect();
    assert_eq!(log_lines.len(), 5);
    fs::write(dir.path().join("serial.csv.done"), format!("{}\n0\n1\n", log_lines[0])).unwrap();

    let out = run("serial.csv", "1");
    assert!(String::from_utf8_lossy(&out.stderr).contains("resuming: 2 of 4"));
    let resumed = fs::read_to_string(dir.path().join("serial.csv")).unwrap();
    assert_eq!(resumed, serial.replacen(",ok,", ",ok-kept,", 1));

    // A log from a different grid is refused.
    let o = lnlm(&sweep_args(&["--alpha", "7", "--output", "serial.csv"]), dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_sbm_writes_graph_and_labels_deterministically() {
    let dir = TempDir::new().unwrap();
    let args = ["gen-sbm", "--blocks", "10,10", "--p-in", "0.5", "--p-out", "0.05", "--seed", "3", "--output", "g.txt", "--labels", "l.txt"];
    assert_eq!(code(&lnlm(&args, dir.path())), 0);
    let first = fs::read(dir.path().join("g.txt")).unwrap();
    assert_eq!(code(&lnlm(&args, dir.path())), 0);
    assert_eq!(first, fs::read(dir.path().join("g.txt")).unwrap());
    let labels = fs::read_to_string(dir.path().join("l.txt")).unwrap();
    assert_eq!(labels.lines().count(), 20);
    assert!(labels.lines().all(|l| l.ends_with(" 0") || l.ends_with(" 1")));
}
