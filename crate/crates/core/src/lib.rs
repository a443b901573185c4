//! Ventricular-fibrillation detection from single-lead ECG episodes.
//!
//! Episodes are filtered, decomposed by EMD, described by frequency-domain
//! similarity features, ranked with a random forest, balanced with SMOTE and
//! classified by an RBF-kernel SVM. [`pipeline`] wires the stages together
//! and [`config::PipelineConfig`] holds every tunable.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod config;
pub mod dataset;
pub mod emd;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod preprocess;
pub mod ranking;
pub mod spectral;
pub mod svm;
pub mod synth;
pub mod wfdb;

pub use config::{PipelineConfig, Stage};
pub use dataset::Dataset;
pub use error::{Error, Result};
