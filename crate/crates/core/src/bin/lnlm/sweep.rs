//! Resumable hyperparameter grid runs.
//!
//! Rows are written in cell order whatever the `--jobs` setting, so a sweep
//! produces the same bytes whether it ran in one go, in parallel, or was
//! interrupted and resumed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use lnlm::eval::labels::LabelSet;
use lnlm::pipeline::EmbedConfig;
use lnlm::Graph;

use crate::{
    classify_report, cluster_report, input_json, linkpred_report, load_graph, load_labels, ClassifyOpts,
    ClusterOpts, FixedModelArgs, InputArgs, LinkpredOpts,
};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTask {
    Classify,
    Cluster,
    Linkpred,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Label file, needed for classify and cluster.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: SweepTask,
    #[command(flatten)]
    fixed: FixedModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "20")]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "200")]
    dim_m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    window: Vec<usize>,
    #[command(flatten)]
    classify: ClassifyOpts,
    #[command(flatten)]
    cluster: ClusterOpts,
    #[command(flatten)]
    linkpred: LinkpredOpts,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// CSV to write, one row per grid cell.
    #[arg(long)]
    output: PathBuf,
    /// Completed-cell log; defaults to `<output>.done`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Cells evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    alpha: f64,
    beta: f64,
    gamma: f64,
    m: usize,
    window: usize,
}

fn grid(a: &SweepArgs) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &alpha in &a.alpha {
        for &beta in &a.beta {
            for &gamma in &a.gamma {
                for &m in &a.dim_m {
                    for &window in &a.window {
                        cells.push(Cell { alpha, beta, gamma, m, window });
                    }
                }
            }
        }
    }
    cells
}

fn metric_columns(a: &SweepArgs) -> Vec<String> {
    match a.task {
        SweepTask::Classify => vec!["micro_f1".into(), "macro_f1".into()],
        SweepTask::Cluster => vec!["nmi".into(), "wcss".into()],
        SweepTask::Linkpred => a.linkpred.fraction.iter().map(|f| format!("auc@{f}")).collect(),
    }
}

fn task_name(t: SweepTask) -> &'static str {
    match t {
        SweepTask::Classify => "classify",
        SweepTask::Cluster => "cluster",
        SweepTask::Linkpred => "linkpred",
    }
}

fn protocol_json(a: &SweepArgs) -> Value {
    match a.task {
        SweepTask::Classify => json!({ "train_ratio": a.classify.train_ratio, "reg": a.classify.reg, "repeats": a.repeats }),
        SweepTask::Cluster => json!({ "clusters": a.cluster.clusters, "restarts": a.cluster.restarts, "repeats": a.repeats }),
        SweepTask::Linkpred => json!({ "fractions": a.linkpred.fraction, "scorer": format!("{:?}", a.linkpred.scorer), "repeats": a.repeats }),
    }
}

/// Everything that determines the rows. A log written under a different
/// fingerprint is refused.
fn fingerprint(a: &SweepArgs) -> String {
    json!({
        "task": task_name(a.task),
        "data": input_json(&a.input),
        "labels": a.labels,
        "fixed": {
            "k": a.fixed.dim_k, "d": a.fixed.dim_d, "neg_b": a.fixed.neg_b,
            "delta": a.fixed.delta, "max_iter": a.fixed.max_iter, "seed": a.fixed.seed,
        },
        "grid": { "alpha": a.alpha, "beta": a.beta, "gamma": a.gamma, "m": a.dim_m, "window": a.window },
        "protocol": protocol_json(a),
    })
    .to_string()
}

fn cell_config(a: &SweepArgs, cell: &Cell, index: usize, n: usize) -> EmbedConfig {
    let mut cfg = a.fixed.config(cell.alpha, cell.beta, cell.gamma, cell.m, cell.window);
    cfg.solver.seed = a.fixed.seed.wrapping_add(index as u64);
    cfg.clamped_to(n)
}

fn run_cell(a: &SweepArgs, g: &Graph, labels: Option<&LabelSet>, cell: &Cell, index: usize, columns: &[String]) -> Vec<String> {
    let cfg = cell_config(a, cell, index, g.n());
    let report = match (a.task, labels) {
        (SweepTask::Classify, Some(l)) => classify_report(g, l, &cfg, &a.classify, a.repeats),
        (SweepTask::Cluster, Some(l)) => cluster_report(g, l, &cfg, &a.cluster, a.repeats),
        (SweepTask::Linkpred, _) => linkpred_report(g, &cfg, &a.linkpred, a.repeats),
        _ => unreachable!("labels checked before the sweep starts"),
    };
    let (status, metrics) = match report {
        Ok(r) => ("ok".to_string(), columns.iter().map(|c| r.metrics.get(c).map_or(String::new(), |v| v.to_string())).collect()),
        Err(e) => (format!("error: {e:#}"), vec![String::new(); columns.len()]),
    };
    let config = json!({
        "command": "sweep",
        "task": task_name(a.task),
        "data": input_json(&a.input),
        "labels": a.labels,
        "model": cfg,
        "protocol": protocol_json(a),
    });
    let mut row = vec![
        index.to_string(),
        cfg.solver.seed.to_string(),
        cell.alpha.to_string(),
        cell.beta.to_string(),
        cell.gamma.to_string(),
        cell.m.to_string(),
        cell.window.to_string(),
        status,
    ];
    row.extend(metrics);
    row.push(config.to_string());
    row
}

/// Reads the completed-cell log. Missing log means a fresh sweep.
fn read_log(path: &Path, expected: &str) -> anyhow::Result<BTreeSet<usize>> {
    let Ok(f) = File::open(path) else {
        return Ok(BTreeSet::new());
    };
    let mut lines = BufReader::new(f).lines();
    let head = lines.next().transpose()?.unwrap_or_default();
    if head.strip_prefix("# ") != Some(expected) {
        bail!(lnlm::Error::InvalidParam(format!(
            "{} was written by a different sweep configuration; remove it to start over",
            path.display()
        )));
    }
    let mut done = BTreeSet::new();
    for line in lines {
        let line = line?;
        if let Ok(i) = line.trim().parse() {
            done.insert(i);
        }
    }
    Ok(done)
}

/// Rows already in the CSV for cells the log marks complete.
fn read_kept_rows(path: &Path, done: &BTreeSet<usize>) -> anyhow::Result<BTreeMap<usize, Vec<String>>> {
    let mut kept = BTreeMap::new();
    if done.is_empty() || !path.exists() {
        return Ok(kept);
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    for rec in reader.records() {
        let rec = rec?;
        let Some(cell) = rec.get(0).and_then(|c| c.parse::<usize>().ok()) else {
            continue;
        };
        if done.contains(&cell) {
            kept.insert(cell, rec.iter().map(str::to_string).collect());
        }
    }
    Ok(kept)
}

pub fn run(a: &SweepArgs) -> anyhow::Result<()> {
    if a.jobs == 0 {
        bail!(lnlm::Error::InvalidParam("--jobs must be at least 1".into()));
    }
    let g = load_graph(&a.input)?;
    let labels = match (&a.labels, a.task) {
        (Some(p), _) => Some(load_labels(p, &g)?),
        (None, SweepTask::Linkpred) => None,
        (None, _) => bail!(lnlm::Error::InvalidParam(format!("--labels is required for task {}", task_name(a.task)))),
    };
    let cells = grid(a);
    for (i, cell) in cells.iter().enumerate() {
        let cfg = cell_config(a, cell, i, g.n());
        cfg.features.validate(g.n())?;
        cfg.solver.validate(g.n())?;
    }

    let columns = metric_columns(a);
    let mut header: Vec<String> = ["cell", "seed", "alpha", "beta", "gamma", "m", "window", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(columns.iter().cloned());
    header.push("config".into());

    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.output.clone().into_os_string();
        p.push(".done");
        PathBuf::from(p)
    });
    let fp = fingerprint(a);
    let done = read_log(&log_path, &fp)?;
    let kept = read_kept_rows(&a.output, &done)?;

    let mut csv_out = csv::Writer::from_path(&a.output).with_context(|| format!("cannot create {}", a.output.display()))?;
    csv_out.write_record(&header)?;
    for row in kept.values() {
        csv_out.write_record(row)?;
    }
    csv_out.flush()?;
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)
        .with_context(|| format!("cannot create {}", log_path.display()))?;
    writeln!(log, "# {fp}")?;
    for cell in kept.keys() {
        writeln!(log, "{cell}")?;
    }
    log.flush()?;

    let pending: Vec<usize> = (0..cells.len()).filter(|i| !kept.contains_key(i)).collect();
    if !kept.is_empty() {
        eprintln!("resuming: {} of {} cells already complete", kept.len(), cells.len());
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Vec<String>)>();
    let labels = labels.as_ref();
    thread::scope(|s| -> anyhow::Result<()> {
        for _ in 0..a.jobs.min(pending.len()) {
            let tx = tx.clone();
            let (next, pending, cells, columns, g) = (&next, &pending, &cells, &columns, &g);
            s.spawn(move || loop {
                let slot = next.fetch_add(1, Ordering::SeqCst);
                let Some(&cell) = pending.get(slot) else { break };
                let row = run_cell(a, g, labels, &cells[cell], cell, columns);
                if tx.send((slot, row)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut ready = BTreeMap::new();
        let mut emit = 0;
        for (slot, row) in rx {
            ready.insert(slot, row);
            while let Some(row) = ready.remove(&emit) {
                csv_out.write_record(&row)?;
                csv_out.flush()?;
                writeln!(log, "{}", pending[emit])?;
                log.flush()?;
                eprintln!("cell {} of {}: {}", pending[emit] + 1, cells.len(), row[7]);
                emit += 1;
            }
        }
        Ok(())
    })?;
    Ok(())
}
