//! Configuration, orchestration and reporting for certification experiments
//! on the Gaussian-mixture testbed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod error;
pub mod experiment;
pub mod report;
pub mod theorems;

pub use config::{ClassifierKind, ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use experiment::{compare_methods, run_certification_experiment, Context, ExperimentOutput, RunOutput, RunSpec};
pub use report::{average_certified_radius, certified_accuracy, ReportRow};
pub use theorems::{run_theorem_suite, SuiteEntry};
