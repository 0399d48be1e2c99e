//! Synthetic graphs with known communities.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::labels::LabelSet;
use crate::graph::Graph;

/// Planted-partition stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn n(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::InvalidParam("block sizes must be positive".into()));
        }
        for p in [self.p_in, self.p_out] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Samples an SBM graph and its block labels. Nodes left isolated are joined
/// to one random node of their own block (any node if the block is a
/// singleton).
pub fn sbm_graph(spec: &SbmSpec) -> Result<(Graph, LabelSet)> {
    spec.validate()?;
    let n = spec.n();
    let block: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edges = Vec::new();
    let mut degree = vec![0usize; n];
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block[u] == block[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.gen::<f64>() < p {
                edges.push((u, v, 1.0));
                degree[u] += 1;
                degree[v] += 1;
            }
        }
    }

    let starts: Vec<usize> = spec
        .block_sizes
        .iter()
        .scan(0, |acc, &s| {
            let start = *acc;
            *acc += s;
            Some(start)
        })
        .collect();
    for u in 0..n {
        if degree[u] > 0 || n == 1 {
            continue;
        }
        let b = block[u];
        let size = spec.block_sizes[b];
        let v = if size > 1 {
            let mut v = starts[b] + rng.gen_range(0..size - 1);
            if v >= u {
                v += 1;
            }
            v
        } else {
            let mut v = rng.gen_range(0..n - 1);
            if v >= u {
                v += 1;
            }
            v
        };
        edges.push((u, v, 1.0));
        degree[u] += 1;
        degree[v] += 1;
    }

    let graph = Graph::from_edges(n, &edges)?;
    let labels = LabelSet::single(block.into_iter().map(Some).collect(), spec.block_sizes.len())?;
    Ok((graph, labels))
}

fn clique_edges(nodes: std::ops::Range<usize>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for u in nodes.clone() {
        for v in (u + 1)..nodes.end {
            out.push((u, v, 1.0));
        }
    }
    out
}

/// Small named fixtures: `k3`, `path3`, `star5`, `two_cliques` (two 5-cliques
/// joined by one bridge) and `barbell8` (two 4-cliques joined by one bridge).
pub fn toy_graphs() -> BTreeMap<&'static str, Graph> {
    let mut out = BTreeMap::new();
    out.insert("k3", Graph::from_edges(3, &clique_edges(0..3)).unwrap());
    out.insert(
        "path3",
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap(),
    );
    out.insert(
        "star5",
        Graph::from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]).unwrap(),
    );
    let mut two = clique_edges(0..5);
    two.extend(clique_edges(5..10));
    two.push((4, 5, 1.0));
    out.insert("two_cliques", Graph::from_edges(10, &two).unwrap());
    let mut barbell = clique_edges(0..4);
    barbell.extend(clique_edges(4..8));
    barbell.push((3, 4, 1.0));
    out.insert("barbell8", Graph::from_edges(8, &barbell).unwrap());
    out
}

/// Ground-truth communities of the `two_cliques` fixture.
pub fn two_cliques_labels() -> Vec<usize> {
    (0..10).map(|i| i / 5).collect()
}
