//! Benchmark harness for chaos-kernel regression: experiment configs,
//! reproducible campaigns, diagnostics and plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod manifest;
pub mod plot;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::CheckFailed(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<wienerchaos::Error> for CliError {
    fn from(e: wienerchaos::Error) -> Self {
        use wienerchaos::Error as E;
        match e {
            E::InvalidArgument(_) | E::EmptyGrid { .. } | E::Parse(_) | E::Json(_) | E::Csv(_) | E::Symmetry(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("I/O: {e}"))
    }
}
