//! Classifiers used throughout the pipeline: softmax regression (bias
//! direction extraction and leakage probes) and a Gini random forest
//! (coordinate importance ranking and sample confidence).

mod forest;
mod labels;
mod logistic;

pub use forest::{fit_forest, fit_forest_with, forest_confidence, top_m_dimensions, ForestConfig, ForestModel};
pub use labels::LabelVector;
pub use logistic::{
    accuracy, fit_logistic, loss_and_gradient, stratified_split, train_probe, train_probe_with,
    LogisticConfig, LogisticModel, ProbeResult,
};
