//! The experiment runners behind the `dpln` command line.
//!
//! Runners take validated configs and return their outputs in memory; only
//! the binary touches the file system.

pub mod chain;
pub mod config;
pub mod formula;
pub mod fruit;
pub mod joint;
pub mod report;

use thiserror::Error;

use crate::atom_store::AtomError;
use crate::autodiff::AutodiffError;
use crate::pln_rules::{FormulaError, RuleSetError};
use crate::rule_engine::RuleError;
use crate::trainer::TrainError;

pub use config::{ConfigError, ExperimentConfig, Overrides};
pub use report::RunOutput;

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Bad user input: config values, KB text, target expressions.
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ExperimentError {
    /// 1 for input problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Input(_) => 1,
            ExperimentError::Internal(_) => 2,
        }
    }
}

macro_rules! internal_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ExperimentError {
            fn from(e: $t) -> Self {
                ExperimentError::Internal(e.to_string())
            }
        }
    )*};
}

internal_from!(AtomError, AutodiffError, FormulaError, RuleSetError, RuleError, TrainError);

pub type Result<T> = std::result::Result<T, ExperimentError>;
