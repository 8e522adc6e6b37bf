//! Command-line front end for the `torsion-sn` toolkit.
//!
//! Every subcommand loads one or more config layers (later wins), computes,
//! and writes CSV tables plus a `manifest.json` into `--out`. `repro <name>`
//! runs a named reproduction target from the bundled configs and scores it
//! against its acceptance band.

pub mod bundled;
mod commands;
pub mod output;
pub mod repro;

pub use commands::{dispatch, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
