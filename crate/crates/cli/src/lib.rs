//! Batch front-end: training, evaluation, sweeps, SMT emission and
//! verification, and the gridworld size table.

pub mod commands;
pub mod config;
pub mod table;

use std::fmt;

pub use commands::{
    cmd_emit_smt, cmd_eval, cmd_sweep, cmd_train, cmd_verify, teacher_for, SweepOutput, TrainOutput,
    VerifyOutput,
};
pub use config::{LearnerKind, RunConfig, SweepPoint};
pub use table::{cmd_gridworld_table, gridworld_row, table_csv, table_text, TableProtocol, TableRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VIOLATED: u8 = 3;

/// A failure with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<moet::Error> for CliError {
    fn from(e: moet::Error) -> Self {
        use moet::Error as E;
        match e {
            E::InvalidConfig(_) | E::ModeError | E::FormatVersionMismatch(_) | E::Parse { .. } => {
                CliError::config(e.to_string())
            }
            _ => CliError::runtime(e.to_string()),
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}
