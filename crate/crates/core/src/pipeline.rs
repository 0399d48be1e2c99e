//! Graph to embedding, end to end, plus the embedding and trace writers.

use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_loworder_features, FeatureCache, FeatureMatrix, LowOrderParams};
use crate::graph::Graph;
use crate::solver::{fit, EmbeddingModel, HyperParams};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub features: LowOrderParams,
    pub solver: HyperParams,
}

impl EmbedConfig {
    /// Caps `d`, `m` and `k` at `n` so small graphs run with the defaults.
    pub fn clamped_to(&self, n: usize) -> EmbedConfig {
        let mut out = *self;
        for (name, dim) in [
            ("d", &mut out.features.dim),
            ("m", &mut out.solver.m),
            ("k", &mut out.solver.k),
        ] {
            if *dim > n {
                log::warn!("{name}={} exceeds node count {n}; using {n}", *dim);
                *dim = n;
            }
        }
        out
    }
}

/// Low-order features followed by the factorization. Features use the solver
/// seed. Dimensions are clamped to the node count.
pub fn embed(g: &Graph, cfg: &EmbedConfig) -> Result<(FeatureMatrix, EmbeddingModel)> {
    embed_with_cache(g, cfg, None)
}

pub fn embed_with_cache(
    g: &Graph,
    cfg: &EmbedConfig,
    cache: Option<&FeatureCache>,
) -> Result<(FeatureMatrix, EmbeddingModel)> {
    if let Some(u) = g.first_isolated() {
        return Err(Error::IsolatedNode(u));
    }
    let cfg = cfg.clamped_to(g.n());
    let seed = cfg.solver.seed;
    let feats = match cache {
        Some(c) => c.load_or_build(g, &cfg.features, seed)?,
        None => build_loworder_features(g, &cfg.features, seed)?,
    };
    let model = fit(g, &feats, &cfg.solver)?;
    Ok((feats, model))
}

/// Header `n k`, then `original_id v_1 ... v_k` per node with 17 significant
/// digits.
pub fn write_embedding<W: Write>(mut out: W, g: &Graph, v: ArrayView2<f64>) -> Result<()> {
    if v.nrows() != g.n() {
        return Err(Error::Shape(format!(
            "{} embedding rows for {} nodes",
            v.nrows(),
            g.n()
        )));
    }
    writeln!(out, "{} {}", v.nrows(), v.ncols())?;
    for (i, row) in v.rows().into_iter().enumerate() {
        write!(out, "{}", g.original_id(i))?;
        for x in row {
            write!(out, " {x:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// `iter,loss` CSV.
pub fn write_trace<W: Write>(mut out: W, model: &EmbeddingModel) -> Result<()> {
    writeln!(out, "iter,loss")?;
    for (i, l) in &model.loss_trace {
        writeln!(out, "{i},{l:.16e}")?;
    }
    Ok(())
}
