//! Command-line driver for `sfconf`.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 shape or validation
//! error, 5 numerical non-convergence or a failed internal check.

pub mod args;
pub mod bench;
pub mod commands;
pub mod compare;
mod error;

pub use args::Cli;
pub use commands::run;
pub use error::{CliError, CliResult, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
