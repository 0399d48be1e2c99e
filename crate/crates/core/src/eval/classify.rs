//! One-vs-rest logistic regression and the node classification protocol.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::labels::LabelSet;
use crate::eval::metrics::micro_macro_f1;
use crate::eval::report::{EvalReport, MetricMap, Task};

pub const MAX_EPOCHS: usize = 500;
pub const GRAD_TOL: f64 = 1e-6;
pub const DEFAULT_REG: f64 = 1e-3;

/// Shuffles `nodes` and splits off `floor(ratio * len)` for training, clamped
/// so both sides are non-empty. With `classes` given the split is stratified:
/// each class contributes its floor share and leftover slots go to the classes
/// with the largest remainders.
pub fn train_test_split(
    nodes: &[usize],
    ratio: f64,
    seed: u64,
    classes: Option<&[usize]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParam(format!("train ratio {ratio} outside (0, 1)")));
    }
    if nodes.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 labeled nodes to split, got {}",
            nodes.len()
        )));
    }
    let n_train = ((ratio * nodes.len() as f64).floor() as usize).clamp(1, nodes.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = nodes.to_vec();
    shuffled.shuffle(&mut rng);

    let Some(classes) = classes else {
        let test = shuffled.split_off(n_train);
        return Ok((shuffled, test));
    };

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &u in &shuffled {
        groups.entry(classes[u]).or_default().push(u);
    }
    let mut quota: Vec<(usize, usize, f64)> = groups
        .iter()
        .map(|(&c, members)| {
            let exact = ratio * members.len() as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
    by_remainder.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
    let mut cursor = 0;
    while assigned < n_train {
        let q = &mut quota[by_remainder[cursor % by_remainder.len()]];
        if q.1 < groups[&q.0].len() {
            q.1 += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    while assigned > n_train {
        let q = &mut quota[by_remainder[by_remainder.len() - 1 - cursor % by_remainder.len()]];
        if q.1 > 0 {
            q.1 -= 1;
            assigned -= 1;
        }
        cursor += 1;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, take, _) in quota {
        let members = &groups[&c];
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    Ok((train, test))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss with L2 penalty on the weights (not the bias), and its
/// gradient. `params` holds the weights followed by the bias.
pub fn logistic_loss_grad(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: ArrayView1<f64>,
    reg: f64,
) -> (f64, Array1<f64>) {
    let (n, dim) = x.dim();
    let w = params.slice(ndarray::s![..dim]);
    let bias = params[dim];
    let z = x.dot(&w) + bias;
    let mut loss = 0.0;
    let mut resid = Array1::zeros(n);
    for i in 0..n {
        loss += softplus(z[i]) - y[i] * z[i];
        resid[i] = sigmoid(z[i]) - y[i];
    }
    let inv_n = 1.0 / n as f64;
    loss = loss * inv_n + 0.5 * reg * w.dot(&w);
    let mut grad = Array1::zeros(dim + 1);
    grad.slice_mut(ndarray::s![..dim])
        .assign(&(x.t().dot(&resid) * inv_n + &w * reg));
    grad[dim] = resid.sum() * inv_n;
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct BinaryModel {
    pub params: Array1<f64>,
    /// True when training data held a single class and the model is constant.
    pub constant: bool,
    pub epochs: usize,
}

impl BinaryModel {
    fn score(&self, x: ArrayView1<f64>) -> f64 {
        let dim = x.len();
        sigmoid(x.dot(&self.params.slice(ndarray::s![..dim])) + self.params[dim])
    }
}

/// Full-batch gradient descent with Armijo backtracking.
pub fn train_binary(x: ArrayView2<f64>, y: ArrayView1<f64>, reg: f64) -> BinaryModel {
    let dim = x.ncols();
    let positives = y.iter().filter(|&&v| v > 0.5).count();
    if positives == 0 || positives == y.len() {
        let mut params = Array1::zeros(dim + 1);
        params[dim] = if positives == 0 { -30.0 } else { 30.0 };
        return BinaryModel {
            params,
            constant: true,
            epochs: 0,
        };
    }
    let mut params = Array1::zeros(dim + 1);
    let (mut loss, mut grad) = logistic_loss_grad(x, y, params.view(), reg);
    let mut step = 1.0;
    let mut epochs = 0;
    while epochs < MAX_EPOCHS {
        let gnorm2 = grad.dot(&grad);
        if gnorm2.sqrt() < GRAD_TOL {
            break;
        }
        epochs += 1;
        step *= 2.0;
        loop {
            let trial = &params - &(&grad * step);
            let (tl, tg) = logistic_loss_grad(x, y, trial.view(), reg);
            if tl <= loss - 0.5 * step * gnorm2 || step < 1e-12 {
                params = trial;
                loss = tl;
                grad = tg;
                break;
            }
            step *= 0.5;
        }
    }
    BinaryModel {
        params,
        constant: false,
        epochs,
    }
}

/// One binary model per class.
#[derive(Debug, Clone)]
pub struct OvrClassifier {
    pub models: Vec<BinaryModel>,
    /// Classes with no positive training example.
    pub absent_classes: Vec<usize>,
}

impl OvrClassifier {
    pub fn scores(&self, x: ArrayView1<f64>) -> Vec<f64> {
        self.models.iter().map(|m| m.score(x)).collect()
    }

    pub fn constant_classes(&self) -> Vec<usize> {
        (0..self.models.len())
            .filter(|&c| self.models[c].constant)
            .collect()
    }
}

pub fn train_ovr_classifier(
    x: ArrayView2<f64>,
    labels: &LabelSet,
    train: &[usize],
    reg: f64,
) -> Result<OvrClassifier> {
    if train.is_empty() {
        return Err(Error::InvalidParam("empty training set".into()));
    }
    if x.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} embedding rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let xs = x.select(Axis(0), train);
    let mut models = Vec::with_capacity(labels.classes());
    let mut absent = Vec::new();
    for c in 0..labels.classes() {
        let y = Array1::from_iter(train.iter().map(|&u| {
            let has = labels.get(u).is_some_and(|s| s.contains(&c));
            if has {
                1.0
            } else {
                0.0
            }
        }));
        if y.sum() == 0.0 {
            absent.push(c);
        }
        let model = train_binary(xs.view(), y.view(), reg);
        if model.constant {
            log::warn!("class {c}: training data holds one side only, constant model");
        }
        models.push(model);
    }
    Ok(OvrClassifier {
        models,
        absent_classes: absent,
    })
}

/// Indices of the `t` highest scores, ties broken by lower class id.
pub fn top_t(scores: &[f64], t: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(t);
    order.sort_unstable();
    order
}

/// Predicted label sets for `nodes`: argmax in single-label mode, the top-`t`
/// classes in multi-label mode where `t` is the node's true label count.
pub fn predict(
    clf: &OvrClassifier,
    x: ArrayView2<f64>,
    truth: &LabelSet,
    nodes: &[usize],
) -> Vec<Vec<usize>> {
    nodes
        .iter()
        .map(|&u| {
            let t = if truth.is_multi() {
                truth.get(u).map_or(1, |s| s.len())
            } else {
                1
            };
            top_t(&clf.scores(x.row(u)), t)
        })
        .collect()
}

/// Micro/macro F1 restricted to `nodes`.
pub fn f1_on(pred: &[Vec<usize>], truth: &LabelSet, nodes: &[usize]) -> (f64, f64) {
    let t: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&u| truth.get(u).map(<[usize]>::to_vec).unwrap_or_default())
        .collect();
    micro_macro_f1(pred, &t, truth.classes())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyProtocol {
    pub train_ratio: f64,
    pub repeats: usize,
    pub reg: f64,
    pub seed: u64,
}

impl Default for ClassifyProtocol {
    fn default() -> Self {
        ClassifyProtocol {
            train_ratio: 0.7,
            repeats: 10,
            reg: DEFAULT_REG,
            seed: 0,
        }
    }
}

/// Repeated split / train / score. Repeat `r` uses seed `seed + r`.
pub fn run_classify_protocol(
    x: ArrayView2<f64>,
    labels: &LabelSet,
    proto: &ClassifyProtocol,
) -> Result<EvalReport> {
    if proto.repeats == 0 {
        return Err(Error::InvalidParam("repeats must be at least 1".into()));
    }
    let nodes = labels.labeled_nodes();
    let strata = if labels.is_multi() {
        None
    } else {
        labels.single_labels().or_else(|| {
            // Unlabeled nodes never reach the split, so any placeholder works.
            Some(
                (0..labels.len())
                    .map(|u| labels.get(u).map_or(0, |s| s[0]))
                    .collect(),
            )
        })
    };
    let mut per_repeat = Vec::with_capacity(proto.repeats);
    let mut flagged = Vec::new();
    for r in 0..proto.repeats {
        let seed = proto.seed.wrapping_add(r as u64);
        let (train, test) = train_test_split(&nodes, proto.train_ratio, seed, strata.as_deref())?;
        let clf = train_ovr_classifier(x, labels, &train, proto.reg)?;
        flagged.extend(clf.absent_classes.iter().copied());
        let pred = predict(&clf, x, labels, &test);
        let (micro, macro_) = f1_on(&pred, labels, &test);
        per_repeat.push(MetricMap::from([
            ("micro_f1".to_string(), micro),
            ("macro_f1".to_string(), macro_),
        ]));
    }
    flagged.sort_unstable();
    flagged.dedup();
    let params = BTreeMap::from([
        ("train_ratio".to_string(), json!(proto.train_ratio)),
        ("reg".to_string(), json!(proto.reg)),
        ("seed".to_string(), json!(proto.seed)),
        ("classifier".to_string(), json!("one-vs-rest logistic regression")),
        (
            "decision_rule".to_string(),
            json!(if labels.is_multi() { "top-t" } else { "argmax" }),
        ),
        ("classes_absent_from_training".to_string(), json!(flagged)),
    ]);
    EvalReport::from_repeats(Task::Classify, params, per_repeat)
}
