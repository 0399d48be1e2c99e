//! Link prediction: hide edges, refit on the rest, rank held-out edges
//! against sampled non-edges.

use std::collections::{BTreeMap, HashSet};

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::metrics::auc;
use crate::eval::report::{EvalReport, MetricMap, Task};
use crate::graph::{remove_edges_keep_connected, Graph};

/// Inner product of rows `u` and `v`.
pub fn score_edge(v: ArrayView2<f64>, a: usize, b: usize) -> f64 {
    v.row(a).dot(&v.row(b))
}

/// Number of neighbours shared by `a` and `b`.
pub fn common_neighbors(g: &Graph, a: usize, b: usize) -> usize {
    let (small, large) = if g.degree_count(a) <= g.degree_count(b) { (a, b) } else { (b, a) };
    g.neighbors(small).filter(|&(w, _)| g.has_edge(large, w)).count()
}

/// Draws `count` distinct unordered pairs `(u, v)`, `u < v`, that are not
/// edges of `g`. `g` should be the full graph so held-out positives are never
/// drawn as negatives.
pub fn sample_negative_edges(g: &Graph, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = g.n();
    let all_pairs = n * n.saturating_sub(1) / 2;
    let available = all_pairs - g.num_edges();
    if count > available {
        return Err(Error::InsufficientNonEdges {
            requested: count,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if count == 0 {
        return Ok(Vec::new());
    }
    // Dense graphs: enumerate and shuffle instead of rejecting.
    if 2 * count >= available {
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        pairs.shuffle(&mut rng);
        pairs.truncate(count);
        return Ok(pairs);
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    Ok(out)
}

/// Scores node pairs after training on a reduced graph.
pub type PairScorer = Box<dyn Fn(usize, usize) -> f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkpredProtocol {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for LinkpredProtocol {
    fn default() -> Self {
        LinkpredProtocol {
            fractions: vec![0.1],
            repeats: 10,
            seed: 0,
        }
    }
}

/// For each fraction and repeat: hide edges keeping the graph connected, fit
/// on the train graph, and compute AUC of held-out edges against an equal
/// number of sampled non-edges. Repeat `r` uses seed `seed + r`; metrics are
/// named `auc@<fraction>`.
pub fn run_linkpred_protocol<F>(g: &Graph, mut fit: F, proto: &LinkpredProtocol) -> Result<EvalReport>
where
    F: FnMut(&Graph, u64) -> Result<PairScorer>,
{
    if proto.repeats == 0 || proto.fractions.is_empty() {
        return Err(Error::InvalidParam("need at least one repeat and one fraction".into()));
    }
    let mut per_repeat = Vec::with_capacity(proto.repeats);
    let mut achieved: BTreeMap<String, f64> = BTreeMap::new();
    for r in 0..proto.repeats {
        let seed = proto.seed.wrapping_add(r as u64);
        let mut metrics = MetricMap::new();
        for &fraction in &proto.fractions {
            let split = remove_edges_keep_connected(g, fraction, seed)?;
            if split.held_out.is_empty() {
                return Err(Error::InvalidParam(format!(
                    "no edges can be hidden at fraction {fraction}"
                )));
            }
            achieved.insert(format!("{fraction}"), split.achieved_fraction);
            let negatives = sample_negative_edges(g, split.held_out.len(), seed ^ 0x9e37_79b9)?;
            let scorer = fit(&split.train, seed)?;
            let pos: Vec<f64> = split.held_out.iter().map(|&(u, v)| scorer(u, v)).collect();
            let neg: Vec<f64> = negatives.iter().map(|&(u, v)| scorer(u, v)).collect();
            metrics.insert(format!("auc@{fraction}"), auc(&pos, &neg)?);
        }
        per_repeat.push(metrics);
    }
    let params = BTreeMap::from([
        ("fractions".to_string(), json!(proto.fractions)),
        ("achieved_fractions".to_string(), json!(achieved)),
        ("seed".to_string(), json!(proto.seed)),
        ("negative_ratio".to_string(), json!(1.0)),
        ("scoring".to_string(), json!("inner product")),
    ]);
    EvalReport::from_repeats(Task::Linkpred, params, per_repeat)
}
