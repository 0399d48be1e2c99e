//! Command-line front end: embed graphs, run the evaluation protocols,
//! sweep hyperparameter grids and generate synthetic benchmarks.

mod sweep;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lnlm::benchgen::{sbm_graph, SbmSpec};
use lnlm::eval::classify::{run_classify_protocol, ClassifyProtocol};
use lnlm::eval::cluster::{run_cluster_protocol, ClusterProtocol};
use lnlm::eval::labels::LabelSet;
use lnlm::eval::linkpred::{common_neighbors, run_linkpred_protocol, score_edge, LinkpredProtocol, PairScorer};
use lnlm::eval::report::EvalReport;
use lnlm::graph::load_edge_list;
use lnlm::pipeline::{embed, write_embedding, write_trace, EmbedConfig};
use lnlm::{Graph, HyperParams, LowOrderParams};

#[derive(Parser, Debug)]
#[command(name = "lnlm", version, about = "Joint local/low-order NMF node embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit an embedding and write it (and optionally the loss trace).
    Embed(EmbedArgs),
    /// Node classification with one-vs-rest logistic regression.
    EvalClassify(ClassifyArgs),
    /// k-means on the embedding scored by NMI.
    EvalCluster(ClusterArgs),
    /// Hide edges, refit, and score held-out edges against non-edges by AUC.
    EvalLinkpred(LinkpredArgs),
    /// Grid over alpha, beta, gamma, m and T with one fit and evaluation per cell.
    Sweep(sweep::SweepArgs),
    /// Write a stochastic block model graph and its block labels.
    GenSbm(GenSbmArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Edge list: `u v` or `u v w` per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Read the third column as an edge weight.
    #[arg(long)]
    pub weighted: bool,
    /// Keep only the largest connected component.
    #[arg(long)]
    pub restrict_lcc: bool,
}

/// Model parameters that sweeps never vary.
#[derive(Args, Debug, Clone)]
pub struct FixedModelArgs {
    /// Embedding dimension k.
    #[arg(long, default_value_t = 128)]
    pub dim_k: usize,
    /// Low-order feature dimension d.
    #[arg(long, default_value_t = 128)]
    pub dim_d: usize,
    /// Negative-sampling constant b.
    #[arg(long, default_value_t = 1.0)]
    pub neg_b: f64,
    /// Relative loss improvement below which fitting stops.
    #[arg(long, default_value_t = 1e-4)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[command(flatten)]
    fixed: FixedModelArgs,
    #[arg(long, default_value_t = 50.0)]
    alpha: f64,
    #[arg(long, default_value_t = 20.0)]
    beta: f64,
    #[arg(long, default_value_t = 20.0)]
    gamma: f64,
    /// Local feature dimension m.
    #[arg(long, default_value_t = 200)]
    dim_m: usize,
    /// Random-walk window T.
    #[arg(long, default_value_t = 5)]
    window: usize,
}

impl ModelArgs {
    fn config(&self) -> EmbedConfig {
        self.fixed.config(self.alpha, self.beta, self.gamma, self.dim_m, self.window)
    }
}

impl FixedModelArgs {
    pub fn config(&self, alpha: f64, beta: f64, gamma: f64, m: usize, window: usize) -> EmbedConfig {
        EmbedConfig {
            features: LowOrderParams {
                window,
                neg_b: self.neg_b,
                dim: self.dim_d,
            },
            solver: HyperParams {
                alpha,
                beta,
                gamma,
                m,
                k: self.dim_k,
                delta: self.delta,
                max_iter: self.max_iter,
                seed: self.seed,
            },
        }
    }
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Embedding file to write.
    #[arg(long)]
    output: PathBuf,
    /// Also write the per-iteration loss as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ClassifyOpts {
    #[arg(long, default_value_t = 0.7)]
    pub train_ratio: f64,
    /// L2 strength of the logistic models.
    #[arg(long, default_value_t = 1e-3)]
    pub reg: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ClusterOpts {
    /// Cluster count; defaults to the number of label classes.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
}

#[derive(Args, Debug, Clone)]
pub struct LinkpredOpts {
    /// Fractions of edges to hide, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub fraction: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Scorer::Dot)]
    pub scorer: Scorer,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    /// Inner product of embedding rows.
    Dot,
    /// Shared-neighbour count on the train graph; no embedding is fitted.
    CommonNeighbors,
    /// Edge membership in the full input graph. A test hook; scores AUC 1.
    Oracle,
}

impl Scorer {
    fn name(self) -> &'static str {
        match self {
            Scorer::Dot => "inner product",
            Scorer::CommonNeighbors => "common neighbors",
            Scorer::Oracle => "oracle",
        }
    }
}

#[derive(Args, Debug)]
struct EvalOutput {
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Label file: `node_id label[,label...]` per line.
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    opts: ClassifyOpts,
    #[command(flatten)]
    out: EvalOutput,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    opts: ClusterOpts,
    #[command(flatten)]
    out: EvalOutput,
}

#[derive(Args, Debug)]
struct LinkpredArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    opts: LinkpredOpts,
    #[command(flatten)]
    out: EvalOutput,
}

#[derive(Args, Debug)]
struct GenSbmArgs {
    /// Block sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    blocks: Vec<usize>,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge list to write.
    #[arg(long)]
    output: PathBuf,
    /// Block labels to write.
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn load_graph(args: &InputArgs) -> anyhow::Result<Graph> {
    let (g, report) = load_edge_list(open(&args.input)?, args.weighted)
        .with_context(|| format!("reading {}", args.input.display()))?;
    if report.self_loops_dropped > 0 || report.duplicates_merged > 0 {
        log::warn!(
            "{}: dropped {} self-loops, merged {} duplicate edges",
            args.input.display(),
            report.self_loops_dropped,
            report.duplicates_merged
        );
    }
    if g.n() == 0 {
        bail!(lnlm::Error::EmptyInput);
    }
    if args.restrict_lcc && !g.is_connected() {
        let (sub, _) = g.largest_component();
        log::info!("restricted to largest component: {} of {} nodes", sub.n(), g.n());
        return Ok(sub);
    }
    Ok(g)
}

pub fn load_labels(path: &Path, g: &Graph) -> anyhow::Result<LabelSet> {
    LabelSet::read(open(path)?, g).with_context(|| format!("reading {}", path.display()))
}

pub fn input_json(args: &InputArgs) -> Value {
    json!({
        "input": args.input,
        "weighted": args.weighted,
        "restrict_lcc": args.restrict_lcc,
    })
}

fn emit_report(mut report: EvalReport, config: Value, out: &EvalOutput) -> anyhow::Result<()> {
    report.params.insert("config".into(), config);
    let text = report.to_json();
    match &out.output {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
            println!("{}", report.summary());
        }
        None => {
            println!("{text}");
            eprintln!("{}", report.summary());
        }
    }
    Ok(())
}

fn cmd_embed(args: &EmbedArgs) -> anyhow::Result<()> {
    let g = load_graph(&args.input)?;
    let cfg = args.model.config().clamped_to(g.n());
    let (_, model) = embed(&g, &cfg)?;
    if !model.converged {
        log::warn!("stopped at max_iter={} before reaching delta", cfg.solver.max_iter);
    }
    let mut w = create(&args.output)?;
    write_embedding(&mut w, &g, model.embedding().view())?;
    w.flush()?;
    if let Some(path) = &args.trace {
        let config = json!({ "command": "embed", "data": input_json(&args.input), "model": cfg });
        let mut w = create(path)?;
        writeln!(w, "# config: {config}")?;
        write_trace(&mut w, &model)?;
        w.flush()?;
    }
    log::info!(
        "{} iterations, final loss {:.6e}, converged={}",
        model.iterations_run,
        model.final_loss(),
        model.converged
    );
    Ok(())
}

pub fn classify_report(g: &Graph, labels: &LabelSet, cfg: &EmbedConfig, opts: &ClassifyOpts, repeats: usize) -> anyhow::Result<EvalReport> {
    let (_, model) = embed(g, cfg)?;
    let proto = ClassifyProtocol {
        train_ratio: opts.train_ratio,
        repeats,
        reg: opts.reg,
        seed: cfg.solver.seed,
    };
    Ok(run_classify_protocol(model.embedding().view(), labels, &proto)?)
}

pub fn cluster_report(g: &Graph, labels: &LabelSet, cfg: &EmbedConfig, opts: &ClusterOpts, repeats: usize) -> anyhow::Result<EvalReport> {
    let (_, model) = embed(g, cfg)?;
    let proto = ClusterProtocol {
        clusters: opts.clusters,
        restarts: opts.restarts,
        repeats,
        seed: cfg.solver.seed,
    };
    Ok(run_cluster_protocol(model.embedding().view(), labels, &proto)?)
}

pub fn linkpred_report(g: &Graph, cfg: &EmbedConfig, opts: &LinkpredOpts, repeats: usize) -> anyhow::Result<EvalReport> {
    let proto = LinkpredProtocol {
        fractions: opts.fraction.clone(),
        repeats,
        seed: cfg.solver.seed,
    };
    let scorer = opts.scorer;
    let mut report = run_linkpred_protocol(
        g,
        |train, seed| -> lnlm::Result<PairScorer> {
            Ok(match scorer {
                Scorer::Dot => {
                    let mut c = *cfg;
                    c.solver.seed = seed;
                    let (_, model) = embed(train, &c)?;
                    let v = model.factors.v;
                    Box::new(move |a, b| score_edge(v.view(), a, b))
                }
                Scorer::CommonNeighbors => {
                    let t = train.clone();
                    Box::new(move |a, b| common_neighbors(&t, a, b) as f64)
                }
                Scorer::Oracle => {
                    let full = g.clone();
                    Box::new(move |a, b| if full.has_edge(a, b) { 1.0 } else { 0.0 })
                }
            })
        },
        &proto,
    )?;
    report.params.insert("scoring".into(), json!(scorer.name()));
    Ok(report)
}

fn cmd_classify(args: &ClassifyArgs) -> anyhow::Result<()> {
    let g = load_graph(&args.input)?;
    let labels = load_labels(&args.labels, &g)?;
    let cfg = args.model.config().clamped_to(g.n());
    let report = classify_report(&g, &labels, &cfg, &args.opts, args.out.repeats)?;
    let config = json!({
        "command": "eval-classify",
        "data": input_json(&args.input),
        "labels": args.labels,
        "model": cfg,
        "protocol": { "train_ratio": args.opts.train_ratio, "reg": args.opts.reg, "repeats": args.out.repeats },
    });
    emit_report(report, config, &args.out)
}

fn cmd_cluster(args: &ClusterArgs) -> anyhow::Result<()> {
    let g = load_graph(&args.input)?;
    let labels = load_labels(&args.labels, &g)?;
    let cfg = args.model.config().clamped_to(g.n());
    let report = cluster_report(&g, &labels, &cfg, &args.opts, args.out.repeats)?;
    let config = json!({
        "command": "eval-cluster",
        "data": input_json(&args.input),
        "labels": args.labels,
        "model": cfg,
        "protocol": { "clusters": args.opts.clusters, "restarts": args.opts.restarts, "repeats": args.out.repeats },
    });
    emit_report(report, config, &args.out)
}

fn cmd_linkpred(args: &LinkpredArgs) -> anyhow::Result<()> {
    let g = load_graph(&args.input)?;
    let cfg = args.model.config().clamped_to(g.n());
    let report = linkpred_report(&g, &cfg, &args.opts, args.out.repeats)?;
    let config = json!({
        "command": "eval-linkpred",
        "data": input_json(&args.input),
        "model": cfg,
        "protocol": { "fractions": args.opts.fraction, "scorer": args.opts.scorer.name(), "repeats": args.out.repeats },
    });
    emit_report(report, config, &args.out)
}

fn cmd_gen_sbm(args: &GenSbmArgs) -> anyhow::Result<()> {
    let spec = SbmSpec {
        block_sizes: args.blocks.clone(),
        p_in: args.p_in,
        p_out: args.p_out,
        seed: args.seed,
    };
    let (g, labels) = sbm_graph(&spec)?;
    let mut w = create(&args.output)?;
    g.write_edge_list(&mut w)?;
    w.flush()?;
    if let Some(path) = &args.labels {
        let mut w = create(path)?;
        labels.write(&mut w, &g)?;
        w.flush()?;
    }
    eprintln!("wrote {} nodes, {} edges", g.n(), g.num_edges());
    Ok(())
}

/// 3 for numeric failures, 2 for everything else (bad input or parameters).
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<lnlm::Error>() {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::EvalClassify(a) => cmd_classify(a),
        Command::EvalCluster(a) => cmd_cluster(a),
        Command::EvalLinkpred(a) => cmd_linkpred(a),
        Command::Sweep(a) => sweep::run(a),
        Command::GenSbm(a) => cmd_gen_sbm(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let _ = writeln!(io::stderr(), "error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
