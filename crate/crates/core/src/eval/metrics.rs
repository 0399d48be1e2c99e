//! Partition, classification and ranking metrics.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(a;b) / sqrt(H(a) H(b))` with natural logs.
///
/// Two single-cluster partitions score 1; if exactly one side has zero
/// entropy the score is 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "partition lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidParam("empty partition".into()));
    }
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ca: HashMap<usize, usize> = HashMap::new();
    let mut cb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ca.len() == 1 && cb.len() == 1 {
        return Ok(1.0);
    }
    if ca.len() == 1 || cb.len() == 1 {
        return Ok(0.0);
    }
    // A one-to-one contingency table means the partitions agree up to naming.
    if joint.len() == ca.len() && joint.len() == cb.len() {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = ca[&x] as f64 / n;
            let py = cb[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Micro- and macro-averaged F1 over aligned predicted and true label sets.
///
/// Per-class F1 with a zero denominator counts as 0 in the macro mean, which
/// runs over all `classes`.
pub fn micro_macro_f1(pred: &[Vec<usize>], truth: &[Vec<usize>], classes: usize) -> (f64, f64) {
    assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fneg = vec![0usize; classes];
    for (p, t) in pred.iter().zip(truth) {
        for &c in p {
            if t.contains(&c) {
                tp[c] += 1;
            } else {
                fp[c] += 1;
            }
        }
        for &c in t {
            if !p.contains(&c) {
                fneg[c] += 1;
            }
        }
    }
    let f1 = |tp: usize, fp: usize, fneg: usize| {
        let denom = 2 * tp + fp + fneg;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    let macro_ = if classes == 0 {
        0.0
    } else {
        (0..classes).map(|c| f1(tp[c], fp[c], fneg[c])).sum::<f64>() / classes as f64
    };
    (micro, macro_)
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half. Uses midranks over the pooled scores.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidParam("AUC needs positive and negative scores".into()));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut pooled: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // 1-based midrank of the tied run i..=j.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
