use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-node class assignments. `None` marks an unlabeled node.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labels: Vec<Option<Vec<usize>>>,
    classes: usize,
    multi: bool,
    names: Vec<String>,
}

impl LabelSet {
    pub fn single(labels: Vec<Option<usize>>, classes: usize) -> Result<LabelSet> {
        let labels = labels.into_iter().map(|l| l.map(|c| vec![c])).collect();
        Self::build(labels, classes, false)
    }

    pub fn multi(labels: Vec<Option<Vec<usize>>>, classes: usize) -> Result<LabelSet> {
        Self::build(labels, classes, true)
    }

    fn build(mut labels: Vec<Option<Vec<usize>>>, classes: usize, multi: bool) -> Result<LabelSet> {
        for (node, set) in labels.iter_mut().enumerate() {
            if let Some(set) = set {
                set.sort_unstable();
                set.dedup();
                if set.is_empty() {
                    return Err(Error::InvalidParam(format!(
                        "node {node} has an empty label set"
                    )));
                }
                if let Some(&c) = set.iter().find(|&&c| c >= classes) {
                    return Err(Error::InvalidParam(format!(
                        "node {node} has class {c} outside [0, {classes})"
                    )));
                }
                if !multi && set.len() > 1 {
                    return Err(Error::InvalidParam(format!(
                        "node {node} has several labels in single-label mode"
                    )));
                }
            }
        }
        Ok(LabelSet {
            labels,
            classes,
            multi,
            names: (0..classes).map(|c| c.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn is_multi(&self) -> bool {
        self.multi
    }

    pub fn get(&self, node: usize) -> Option<&[usize]> {
        self.labels[node].as_deref()
    }

    /// Indices of labeled nodes in ascending order.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i].is_some()).collect()
    }

    /// Dense class vector when every node carries exactly one label.
    pub fn single_labels(&self) -> Option<Vec<usize>> {
        self.labels
            .iter()
            .map(|l| match l.as_deref() {
                Some([c]) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Class names as they appeared in the source file.
    pub fn class_names(&self) -> &[String] {
        &self.names
    }

    /// Reads `node_id label[,label...]` lines against the graph's id map.
    /// Class tokens are mapped to dense ids in sorted order (numeric when all
    /// tokens are integers). Graph nodes missing from the file stay unlabeled.
    pub fn read<R: BufRead>(source: R, g: &Graph) -> Result<LabelSet> {
        let index = g.id_index();
        let mut raw: Vec<Option<Vec<String>>> = vec![None; g.n()];
        let mut tokens = BTreeSet::new();
        for (lineno, line) in source.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let (id, rest) = match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(rest), None) => (id, rest),
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "expected `node_id label[,label...]`".into(),
                    })
                }
            };
            let id: i64 = id.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid node id `{id}`"),
            })?;
            let Some(&node) = index.get(&id) else {
                log::warn!("label line {lineno}: node {id} not in graph, skipped");
                continue;
            };
            let set: Vec<String> = rest
                .split(',')
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            if set.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "empty label list".into(),
                });
            }
            tokens.extend(set.iter().cloned());
            raw[node].get_or_insert_with(Vec::new).extend(set);
        }

        let mut names: Vec<String> = tokens.into_iter().collect();
        if names.iter().all(|t| t.parse::<i64>().is_ok()) {
            names.sort_by_key(|t| t.parse::<i64>().unwrap());
        }
        let lookup: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let labels: Vec<Option<Vec<usize>>> = raw
            .iter()
            .map(|set| {
                set.as_ref()
                    .map(|s| s.iter().map(|t| lookup[t.as_str()]).collect())
            })
            .collect();
        let multi = labels
            .iter()
            .flatten()
            .any(|s: &Vec<usize>| s.iter().collect::<BTreeSet<_>>().len() > 1);
        let mut out = Self::build(labels, names.len(), multi)?;
        out.names = names;
        Ok(out)
    }

    pub fn write<W: Write>(&self, mut out: W, g: &Graph) -> Result<()> {
        for (node, set) in self.labels.iter().enumerate() {
            if let Some(set) = set {
                let joined: Vec<&str> = set.iter().map(|&c| self.names[c].as_str()).collect();
                writeln!(out, "{} {}", g.original_id(node), joined.join(","))?;
            }
        }
        Ok(())
    }
}
