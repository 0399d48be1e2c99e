//! Node embeddings from a joint non-negative factorization of the adjacency
//! matrix and a random-walk proximity matrix, plus the evaluation harness
//! (classification, clustering, link prediction) used to judge them.

pub mod benchgen;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, LowOrderParams};
pub use graph::Graph;
pub use solver::{EmbeddingModel, Factors, HyperParams};
