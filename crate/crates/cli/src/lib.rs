//! Command-line driver: theorem checks, rank and accounting tables, and
//! training sweeps, all described by JSON manifests.

mod app;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;

pub use app::run_cli;
pub use commands::{execute, Outcome};
pub use error::CliError;
pub use manifest::{AccountingCommand, Command, Manifest, Theorem1Command, MANIFEST_VERSION};
pub use output::{resolve_out_dir, OutputDir, OUT_DIR_ENV};
