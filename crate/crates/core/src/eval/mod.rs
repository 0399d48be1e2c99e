pub mod classify;
pub mod cluster;
pub mod kmeans;
pub mod labels;
pub mod linkpred;
pub mod metrics;
pub mod report;
