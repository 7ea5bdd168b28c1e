//! Experiment drivers reproducing the solver studies at desk scale, plus a
//! manufactured-solution verification harness.

pub mod config;
pub mod exp1;
pub mod exp2;
pub mod exp34;
pub mod mms;
pub mod setup;
pub mod stokes;

use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Driver failure classification, mapped onto process exit codes by `main`:
/// configuration problems exit 1, solver failures exit 2.
#[derive(Debug)]
pub enum RunError {
    Config(config::ConfigError),
    Solver(flowmg_core::error::Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn io(e: std::io::Error) -> RunError {
        RunError::Io(e)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Solver(_) | RunError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Solver(e) => write!(f, "solver failure: {e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<config::ConfigError> for RunError {
    fn from(e: config::ConfigError) -> Self {
        RunError::Config(e)
    }
}
