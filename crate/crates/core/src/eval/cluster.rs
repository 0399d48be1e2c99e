//! Clustering protocol: k-means on embeddings scored by NMI.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::kmeans::kmeans;
use crate::eval::labels::LabelSet;
use crate::eval::metrics::nmi;
use crate::eval::report::{EvalReport, MetricMap, Task};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterProtocol {
    /// Cluster count; `None` uses the number of classes in the labels.
    pub clusters: Option<usize>,
    pub restarts: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ClusterProtocol {
    fn default() -> Self {
        ClusterProtocol {
            clusters: None,
            restarts: 10,
            repeats: 10,
            seed: 0,
        }
    }
}

/// Runs k-means `repeats` times (seed `seed + r`) on the labeled rows and
/// averages NMI against the single-label ground truth.
pub fn run_cluster_protocol(
    x: ArrayView2<f64>,
    labels: &LabelSet,
    proto: &ClusterProtocol,
) -> Result<EvalReport> {
    if labels.is_multi() {
        return Err(Error::InvalidParam(
            "clustering needs single-label ground truth".into(),
        ));
    }
    if x.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} embedding rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if proto.repeats == 0 {
        return Err(Error::InvalidParam("repeats must be at least 1".into()));
    }
    let nodes = labels.labeled_nodes();
    let truth: Vec<usize> = nodes.iter().map(|&u| labels.get(u).unwrap()[0]).collect();
    let clusters = proto.clusters.unwrap_or(labels.classes());
    let rows = x.select(ndarray::Axis(0), &nodes);

    let mut per_repeat = Vec::with_capacity(proto.repeats);
    for r in 0..proto.repeats {
        let res = kmeans(rows.view(), clusters, proto.restarts, proto.seed.wrapping_add(r as u64))?;
        per_repeat.push(MetricMap::from([
            ("nmi".to_string(), nmi(&res.assignments, &truth)?),
            ("wcss".to_string(), res.wcss),
        ]));
    }
    let params = BTreeMap::from([
        ("clusters".to_string(), json!(clusters)),
        ("restarts".to_string(), json!(proto.restarts)),
        ("seed".to_string(), json!(proto.seed)),
        ("normalization".to_string(), json!("geometric mean")),
    ]);
    EvalReport::from_repeats(Task::Cluster, params, per_repeat)
}
