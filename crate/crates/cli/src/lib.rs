//! Scenario-driven front end: TOML scenarios, the check pipeline, reports
//! and the `pnvflow` command line.

// Negated comparisons double as NaN checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod scenario;

pub use error::ConfigError;
pub use pipeline::{execute, Outcome, Verb};
pub use report::Report;
pub use scenario::Scenario;
