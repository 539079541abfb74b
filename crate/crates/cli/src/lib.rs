//! Configuration, subcommands and file output for the `riddle` binary.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

use riddle_core::multifractal::MultifractalError;
use riddle_core::stability::StabilityError;
use riddle_core::thermo::ThermoError;
use riddle_core::DynamicsError;

pub use commands::Run;
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    /// 0 success, 2 config or hypothesis, 3 I/O, 4 inconclusive statistics,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Hypothesis(_) => 2,
            CliError::Io(_) => 3,
            CliError::Inconclusive(_) => 4,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Hypothesis(m) => CliError::Hypothesis(m),
            DynamicsError::InvalidMap(m) => CliError::Config(m),
            other => CliError::Compute(other.to_string()),
        }
    }
}

impl From<ThermoError> for CliError {
    fn from(e: ThermoError) -> Self {
        match e {
            ThermoError::Hypothesis(m) => CliError::Hypothesis(m),
            ThermoError::InvalidDiscretization(m) => CliError::Config(m),
            ThermoError::Dynamics(d) => d.into(),
            other => CliError::Compute(other.to_string()),
        }
    }
}

impl From<StabilityError> for CliError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::InsufficientTail { .. }
            | StabilityError::Inconclusive { .. }
            | StabilityError::RejectionStall { .. } => CliError::Inconclusive(e.to_string()),
            StabilityError::InvalidParameters(m) => CliError::Config(m),
            StabilityError::Thermo(t) => t.into(),
            StabilityError::Dynamics(d) => d.into(),
            other => CliError::Compute(other.to_string()),
        }
    }
}

impl From<MultifractalError> for CliError {
    fn from(e: MultifractalError) -> Self {
        match e {
            MultifractalError::Thermo(t) => t.into(),
            other => CliError::Compute(other.to_string()),
        }
    }
}
