//! Library backing the `tim` binary: run configuration, command
//! implementations, and the CSV table writers.
//!
//! The binary itself is a thin shell around [`commands`]; keeping the logic
//! in a library crate lets integration and acceptance tests drive the exact
//! code paths the executable uses.

pub mod commands;
pub mod config;
pub mod csvout;

/// Seed used when neither `--seed` nor the run configuration provides one.
/// A fixed constant (not OS entropy) so that bare invocations are still
/// reproducible; documented in the CLI help text.
pub const DEFAULT_SEED: u64 = 7;
