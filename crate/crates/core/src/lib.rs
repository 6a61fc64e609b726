//! Balanced SHAP explanations for binary classifiers on imbalanced tabular
//! data.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataset`]: CSV ingestion, planted-signal synthetic data, stratified
//!   hold-out splits, standardization.
//! - [`mlp`]: the ReLU/sigmoid multilayer perceptron being explained.
//! - [`balance`]: background composition at a target minority-overall rate
//!   and K-means based under-sampling of explanation data.
//! - [`attribution`]: exact, Kernel, Deep and Gradient SHAP engines.
//! - [`evaluation`]: importance ranking, AUC with bootstrap intervals, top-k
//!   retraining, abnormal-point detection, counterfactual probes and beeswarm
//!   export.
//! - [`pipeline`]: configuration-driven orchestration used by the CLI.

pub mod attribution;
pub mod balance;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod matrix;
pub mod mlp;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
