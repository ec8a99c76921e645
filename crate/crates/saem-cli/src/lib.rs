//! Library backing the `saem` command-line tool.
//!
//! The binary in `main.rs` is a thin argument-parsing shell; everything it
//! does goes through this crate so that command behaviour can be tested
//! without spawning processes. The pieces are:
//!
//! * [`config`] — the external fit-configuration format (TOML) and its
//!   translation into a [`saem_core::NlmeModel`] plus run options;
//! * [`report`] — the structured fit report written by `saem fit` and read
//!   back by every downstream command (`simulate`, `vpc`, `bootstrap`, ...);
//! * [`hurdle`] — dataset splitting for two-part hurdle fits;
//! * [`scenario`] — simulation-study scenario files and built-in presets;
//! * [`artifacts`] — cleanup guard that removes partial outputs on failure;
//! * [`commands`] — one module per subcommand.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod hurdle;
pub mod report;
pub mod scenario;

/// Error type shared by all CLI operations.
///
/// Everything funnels into [`saem_core::Error`]; the CLI adds no categories
/// of its own so that every failure message keeps the machine-parsable
/// `"<category>: <detail>"` shape.
pub type CliError = saem_core::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CliError>;
