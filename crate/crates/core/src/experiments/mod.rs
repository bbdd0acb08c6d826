//! Config-driven experiment runner.

mod config;
mod output;
mod runner;

pub use config::{
    ConfigErrors, ConfigIssue, DecompositionChoice, ExperimentConfig, ExperimentKind, GridSpec, ModelConfig, Options, Precision, Seeds,
    DEFAULT_RESIDUAL_CONSTANT,
};
pub use output::{resolve_output_dir, Check, Manifest, OutputDir, MANIFEST_SCHEMA, OUTPUT_ROOT_ENV};
pub use runner::*;
