//! File formats and stage orchestration for the `lram` command-line tool.
//!
//! The numerics live in `lram-core`; this crate reads configs and material
//! cards, runs the stages and writes CSV, report and manifest files.

pub mod card;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::{PipelineConfig, Stage};
pub use error::{CliError, Diagnostic, Severity};
pub use pipeline::{run, validate, RunReport};
