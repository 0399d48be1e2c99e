use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Cluster,
    Linkpred,
}

pub type MetricMap = BTreeMap<String, f64>;

/// Protocol outcome: mean metrics plus the per-repeat values they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub params: BTreeMap<String, Value>,
    pub metrics: MetricMap,
    pub repeats: usize,
    pub per_repeat: Option<Vec<MetricMap>>,
}

impl EvalReport {
    /// Averages each metric over the repeats. Every repeat must report the
    /// same metric names and finite values.
    pub fn from_repeats(
        task: Task,
        params: BTreeMap<String, Value>,
        per_repeat: Vec<MetricMap>,
    ) -> Result<EvalReport> {
        let first = per_repeat
            .first()
            .ok_or_else(|| Error::InvalidParam("no repeats to aggregate".into()))?;
        let mut metrics = MetricMap::new();
        for name in first.keys() {
            let mut sum = 0.0;
            for rep in &per_repeat {
                let v = *rep.get(name).ok_or_else(|| {
                    Error::InvalidParam(format!("metric `{name}` missing from a repeat"))
                })?;
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("metric `{name}` is {v}")));
                }
                sum += v;
            }
            metrics.insert(name.clone(), sum / per_repeat.len() as f64);
        }
        Ok(EvalReport {
            task,
            params,
            metrics,
            repeats: per_repeat.len(),
            per_repeat: Some(per_repeat),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `name=value` pairs on one line.
    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .metrics
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        format!(
            "{}: {} (repeats={})",
            serde_json::to_value(self.task).unwrap().as_str().unwrap(),
            parts.join(" "),
            self.repeats
        )
    }
}
