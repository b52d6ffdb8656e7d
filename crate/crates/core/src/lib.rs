//! Debiased downstream logistic regression from LLM and expert annotations.
//!
//! A corpus carries cheap LLM labels on every row and expensive gold labels
//! on a uniformly sampled subset. The crate fits the downstream logistic
//! model five ways:
//!
//! - [`baseline::estimate_classical`]: gold-labeled rows only.
//! - [`baseline::estimate_imputation`]: LLM labels treated as gold on all rows.
//! - [`baseline::estimate_reference`]: gold labels on all rows (the target).
//! - [`ppi::estimate_ppi`]: imputation plus a gradient rectifier from the labeled subset.
//! - [`dsl::estimate_dsl`]: cross-fitted doubly robust pseudo-outcomes.
//!
//! [`harness`] runs the two benchmark protocols (vary the number of expert
//! labels, or vary the corpus size at a fixed expert budget) and scores the
//! estimators with standardized RMSE and bias from [`metrics`].

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod datasets;
pub mod dsl;
pub mod error;
pub mod glm;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod ppi;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use glm::{MomentProblem, SolverConfig};
pub use model::{AnnotatedCorpus, CoefficientVector, EstimateReport, EstimatorKind, Row, SelectionDesign};
