//! Undirected weighted graphs in compressed sparse row layout.
//!
//! Node ids read from an edge list are remapped to a dense `0..n` range in
//! order of first appearance. The original ids are kept so embeddings and
//! labels can be written back against them.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Immutable undirected graph. Every edge is stored in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    ids: Vec<i64>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
    weighted: bool,
}

/// Per-node weighted degrees, `d_i = sum_j A_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(pub Vec<f64>);

impl DegreeVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Lines altered while parsing an edge list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

impl Graph {
    /// Builds a graph on nodes `0..n` from undirected edge triples.
    ///
    /// Self-loops are dropped and duplicate pairs (in either orientation) are
    /// merged by summing their weights.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
        let ids = (0..n as i64).collect();
        let weighted = edges.iter().any(|e| e.2 != 1.0);
        Self::assemble(ids, edges.iter().copied(), weighted).map(|(g, _)| g)
    }

    fn assemble<I>(ids: Vec<i64>, edges: I, weighted: bool) -> Result<(Graph, LoadReport)>
    where
        I: Iterator<Item = (usize, usize, f64)>,
    {
        let n = ids.len();
        let mut report = LoadReport::default();
        let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParam(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "edge ({u}, {v}) has non-positive weight {w}"
                )));
            }
            if u == v {
                report.self_loops_dropped += 1;
                continue;
            }
            let key = (u.min(v), u.max(v));
            match merged.get_mut(&key) {
                Some(acc) => {
                    report.duplicates_merged += 1;
                    if weighted {
                        *acc += w;
                    }
                }
                None => {
                    merged.insert(key, if weighted { w } else { 1.0 });
                }
            }
        }

        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(u, v), &w) in &merged {
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(2 * merged.len());
        let mut weights = Vec::with_capacity(2 * merged.len());
        indptr.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable_by_key(|&(v, _)| v);
            for &(v, w) in row.iter() {
                indices.push(v);
                weights.push(w);
            }
            indptr.push(indices.len());
        }
        Ok((
            Graph {
                ids,
                indptr,
                indices,
                weights,
                weighted,
            },
            report,
        ))
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    /// Original id of dense node `i`.
    pub fn original_id(&self, i: usize) -> i64 {
        self.ids[i]
    }

    pub fn original_ids(&self) -> &[i64] {
        &self.ids
    }

    /// Dense index of an original node id, if present.
    pub fn index_of(&self, id: i64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Lookup table from original id to dense index.
    pub fn id_index(&self) -> HashMap<i64, usize> {
        self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    /// Neighbours of `u` with edge weights, sorted by neighbour index.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.indptr[u], self.indptr[u + 1]);
        self.indices[s..e]
            .iter()
            .copied()
            .zip(self.weights[s..e].iter().copied())
    }

    pub fn degree_count(&self, u: usize) -> usize {
        self.indptr[u + 1] - self.indptr[u]
    }

    /// Adjacency entry `A_uv` (0 when absent).
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        let (s, e) = (self.indptr[u], self.indptr[u + 1]);
        match self.indices[s..e].binary_search(&v) {
            Ok(pos) => self.weights[s + pos],
            Err(_) => 0.0,
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.weight(u, v) > 0.0
    }

    /// Undirected edges as `(u, v, w)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| v > u)
                .map(move |(v, w)| (u, v, w))
        })
    }

    /// `vol(G) = sum_ij A_ij`; each undirected edge contributes twice.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn degrees(&self) -> DegreeVector {
        DegreeVector(
            (0..self.n())
                .map(|u| self.weights[self.indptr[u]..self.indptr[u + 1]].iter().sum())
                .collect(),
        )
    }

    /// Sum of squared adjacency entries, `||A||_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Dense copy of the adjacency matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::zeros((n, n));
        for u in 0..n {
            for (v, w) in self.neighbors(u) {
                a[[u, v]] = w;
            }
        }
        a
    }

    /// Sparse-dense product `A X`.
    pub fn matmul(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n(), "A X: row count mismatch");
        let mut out = Array2::zeros((self.n(), x.ncols()));
        for u in 0..self.n() {
            let mut row = out.row_mut(u);
            for (v, w) in self.neighbors(u) {
                row.scaled_add(w, &x.row(v));
            }
        }
        out
    }

    /// First node with zero degree, if any.
    pub fn first_isolated(&self) -> Option<usize> {
        (0..self.n()).find(|&u| self.degree_count(u) == 0)
    }

    /// Partition of the nodes by reachability. Components are listed in order
    /// of their smallest node and each component is sorted.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Vec::new();
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for (v, _) in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.connected_components().len() == 1
    }

    /// Induced subgraph on `nodes` (dense indices, kept in the given order).
    pub fn subgraph(&self, nodes: &[usize]) -> Graph {
        let mut remap = vec![usize::MAX; self.n()];
        for (new, &old) in nodes.iter().enumerate() {
            remap[old] = new;
        }
        let ids = nodes.iter().map(|&u| self.ids[u]).collect();
        let edges = self
            .edges()
            .filter(|&(u, v, _)| remap[u] != usize::MAX && remap[v] != usize::MAX)
            .map(|(u, v, w)| (remap[u], remap[v], w));
        let (mut g, _) = Self::assemble(ids, edges, true).expect("subgraph of a valid graph");
        g.weighted = self.weighted;
        g
    }

    /// Keeps only the largest connected component (ties go to the component
    /// with the smallest node). Returns the subgraph and the kept old indices.
    pub fn largest_component(&self) -> (Graph, Vec<usize>) {
        let comps = self.connected_components();
        let best = comps
            .into_iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(_, c)| c)
            .unwrap_or_default();
        (self.subgraph(&best), best)
    }

    /// Same node set and ids, different edges.
    fn with_edges(&self, edges: impl Iterator<Item = (usize, usize, f64)>) -> Graph {
        let (mut g, _) =
            Self::assemble(self.ids.clone(), edges, true).expect("edges drawn from a valid graph");
        g.weighted = self.weighted;
        g
    }

    /// Writes the canonical edge list: `u v` or `u v w` per line using original
    /// ids, one line per undirected edge, sorted by original id pair.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        let mut lines: Vec<(i64, i64, f64)> = self
            .edges()
            .map(|(u, v, w)| {
                let (a, b) = (self.ids[u], self.ids[v]);
                (a.min(b), a.max(b), w)
            })
            .collect();
        lines.sort_by_key(|x| (x.0, x.1));
        for (a, b, w) in lines {
            if self.weighted {
                writeln!(out, "{a} {b} {w:?}")?;
            } else {
                writeln!(out, "{a} {b}")?;
            }
        }
        Ok(())
    }

    /// Writes the `dense_index original_id` sidecar map.
    pub fn write_id_map<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, id) in self.ids.iter().enumerate() {
            writeln!(out, "{i} {id}")?;
        }
        Ok(())
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` and blank
/// lines are skipped. With `weighted` unset any third column is ignored and
/// repeated pairs collapse to weight 1.
pub fn load_edge_list<R: BufRead>(source: R, weighted: bool) -> Result<(Graph, LoadReport)> {
    let mut ids: Vec<i64> = Vec::new();
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut self_loops = 0;

    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() < 2 || toks.len() > 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `u v [w]`, found {} tokens", toks.len()),
            });
        }
        let parse_id = |t: &str| {
            t.parse::<i64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid node id `{t}`"),
            })
        };
        let (a, b) = (parse_id(toks[0])?, parse_id(toks[1])?);
        let w = match toks.get(2) {
            Some(t) => {
                let w: f64 = t.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid weight `{t}`"),
                })?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("weight must be positive, got {w}"),
                    });
                }
                if weighted {
                    w
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        if a == b {
            self_loops += 1;
            continue;
        }
        let mut intern = |id: i64| {
            *index.entry(id).or_insert_with(|| {
                ids.push(id);
                ids.len() - 1
            })
        };
        let (u, v) = (intern(a), intern(b));
        edges.push((u, v, w));
    }

    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (graph, mut report) = Graph::assemble(ids, edges.into_iter(), weighted)?;
    report.self_loops_dropped += self_loops;
    if report.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop(s)", report.self_loops_dropped);
    }
    Ok((graph, report))
}

/// A train graph plus the edges hidden from it.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train: Graph,
    pub held_out: Vec<(usize, usize)>,
    /// Requested fraction of edges to hide.
    pub fraction: f64,
    /// Fraction actually hidden; lower than requested when the spanning tree
    /// leaves too few removable edges or the floor rounds down.
    pub achieved_fraction: f64,
    /// Number of edges the request asked for, `floor(fraction * |E|)`.
    pub target: usize,
}

impl EdgeSplit {
    pub fn is_short(&self) -> bool {
        self.held_out.len() < self.target || self.held_out.is_empty()
    }
}

/// Hides `floor(fraction * |E|)` edges chosen uniformly among the edges
/// outside a random spanning tree, so the train graph stays connected.
pub fn remove_edges_keep_connected(g: &Graph, fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let comps = g.connected_components().len();
    if comps != 1 {
        return Err(Error::Disconnected(comps));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize, f64)> = g.edges().collect();
    edges.shuffle(&mut rng);

    // Kruskal over a shuffled order yields a random spanning tree.
    let mut dsu = DisjointSets::new(g.n());
    let mut tree = Vec::with_capacity(g.n().saturating_sub(1));
    let mut spare = Vec::new();
    for e in edges {
        if dsu.union(e.0, e.1) {
            tree.push(e);
        } else {
            spare.push(e);
        }
    }

    let total = g.num_edges();
    let target = (fraction * total as f64).floor() as usize;
    let take = target.min(spare.len());
    if take < target {
        log::warn!(
            "only {} of {} requested edges can be hidden without disconnecting the graph",
            take,
            target
        );
    }
    let held: Vec<(usize, usize, f64)> = spare.drain(..take).collect();
    let train = g.with_edges(tree.into_iter().chain(spare));
    let mut held_out: Vec<(usize, usize)> = held.iter().map(|&(u, v, _)| (u, v)).collect();
    held_out.sort_unstable();

    Ok(EdgeSplit {
        train,
        held_out,
        fraction,
        achieved_fraction: take as f64 / total as f64,
        target,
    })
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when `a` and `b` were in different sets.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Graph {
        load_edge_list(s.as_bytes(), true).unwrap().0
    }

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn load_unweighted_default() {
        let g = load("0 1\n1 2\n");
        assert_eq!(g.n(), 3);
        assert_eq!(g.num_edges(), 2);
        assert!(g.edges().all(|(_, _, w)| w == 1.0));
    }

    #[test]
    fn duplicate_edges_sum() {
        let (g, report) = load_edge_list("0 1 2.5\n1 0 1.5\n".as_bytes(), true).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.weight(0, 1), 4.0);
        assert_eq!(g.weight(1, 0), 4.0);
        assert_eq!(report.duplicates_merged, 1);
    }

    #[test]
    fn ids_remapped_by_first_appearance() {
        let g = load("5 9\n9 7\n");
        assert_eq!(g.n(), 3);
        assert_eq!(g.original_ids(), &[5, 9, 7]);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
    }

    #[test]
    fn comments_and_self_loops() {
        let (g, report) =
            load_edge_list("# header\n0 1\n\n1 1\n1 2\n".as_bytes(), false).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(report.self_loops_dropped, 1);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_edge_list("0 1\n1 x\n".as_bytes(), false),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_edge_list("0 1 -1\n".as_bytes(), true),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_edge_list("0 1 0\n".as_bytes(), true),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_edge_list("# nothing\n".as_bytes(), true),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            load_edge_list("0 1 2 3\n".as_bytes(), true),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn volume_cases() {
        assert_eq!(k3().volume(), 6.0);
        let single = Graph::from_edges(2, &[(0, 1, 2.0)]).unwrap();
        assert_eq!(single.volume(), 4.0);
        let empty = Graph::from_edges(4, &[]).unwrap();
        assert_eq!(empty.volume(), 0.0);
    }

    #[test]
    fn degree_cases() {
        assert_eq!(k3().degrees().0, vec![2.0, 2.0, 2.0]);
        let star =
            Graph::from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]).unwrap();
        assert_eq!(star.degrees().0, vec![4.0, 1.0, 1.0, 1.0, 1.0]);
        let iso = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(iso.degrees().0[2], 0.0);
        assert_eq!(iso.first_isolated(), Some(2));
    }

    #[test]
    fn components() {
        let two = Graph::from_edges(
            6,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
            ],
        )
        .unwrap();
        let comps = two.connected_components();
        assert_eq!(comps, vec![vec![0, 1, 2], vec![3, 4, 5]]);

        let path = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(path.connected_components(), vec![vec![0, 1, 2]]);

        let single = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(single.connected_components(), vec![vec![0]]);
    }

    #[test]
    fn lcc_restriction() {
        let g = load("0 1\n1 2\n10 11\n");
        let (lcc, kept) = g.largest_component();
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(lcc.n(), 3);
        assert_eq!(lcc.original_ids(), &[0, 1, 2]);
    }

    #[test]
    fn split_k3_floors_to_zero() {
        let split = remove_edges_keep_connected(&k3(), 0.3, 1).unwrap();
        assert_eq!(split.target, 0);
        assert!(split.held_out.is_empty());
        assert_eq!(split.achieved_fraction, 0.0);
        assert!(split.is_short());
    }

    #[test]
    fn split_path_has_nothing_removable() {
        let path = Graph::from_edges(
            6,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0)],
        )
        .unwrap();
        let split = remove_edges_keep_connected(&path, 0.2, 3).unwrap();
        assert_eq!(split.target, 1);
        assert!(split.held_out.is_empty());
        assert_eq!(split.achieved_fraction, 0.0);
        assert_eq!(split.train.num_edges(), 5);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(matches!(
            remove_edges_keep_connected(&k3(), 1.0, 0),
            Err(Error::InvalidParam(_))
        ));
        let disc = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(
            remove_edges_keep_connected(&disc, 0.1, 0),
            Err(Error::Disconnected(2))
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = load("5 9 1.5\n9 7 0.1\n7 5 3\n");
        let mut first = Vec::new();
        g.write_edge_list(&mut first).unwrap();
        let g2 = load_edge_list(first.as_slice(), true).unwrap().0;
        let mut second = Vec::new();
        g2.write_edge_list(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(String::from_utf8(first).unwrap(), "5 7 3.0\n5 9 1.5\n7 9 0.1\n");
    }

    #[test]
    fn sparse_matmul_matches_dense() {
        let g = load("0 1 2\n1 2\n2 3 0.5\n0 3\n");
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let dense = g.to_dense().dot(&x);
        let sparse = g.matmul(x.view());
        assert!((dense - sparse).iter().all(|d| d.abs() < 1e-14));
    }
}
