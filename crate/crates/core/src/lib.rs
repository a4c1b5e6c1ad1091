//! Tree-ensemble intrusion detection for labelled network-flow tables.
//!
//! The crate covers the whole path from a CSV of flow records to a ranked
//! comparison of four classifiers:
//!
//! - [`dataset`]: CSV ingestion, class balance, stratified splitting
//! - [`preprocess`]: median imputation, categorical codes, positive-correlation
//!   feature selection
//! - [`tree`]: CART trees (Gini gain for classes, variance reduction for
//!   residuals)
//! - [`ensemble`]: random forest, gradient boosting, AdaBoost
//! - [`metrics`]: confusion matrix, precision/recall/F1/accuracy, ROC and AUC
//! - [`persist`]: versioned, byte-stable JSON model files
//! - [`pipeline`]: the `inspect`, `select-features`, `train`, `compare` and
//!   `predict` commands
//!
//! Label 1 is the anomaly (positive) class throughout.

pub mod dataset;
pub mod ensemble;
pub mod metrics;
pub mod persist;
pub mod pipeline;
pub mod preprocess;
pub mod synthetic;
pub mod tree;

pub use dataset::{ClassBalance, Dataset, Label, RawTable, Schema};
pub use ensemble::{Hyperparams, Model, ModelKind};
pub use metrics::{ConfusionMatrix, MetricSet, RocCurve};
pub use persist::ModelEnvelope;
pub use pipeline::{PipelineError, RunConfig};
