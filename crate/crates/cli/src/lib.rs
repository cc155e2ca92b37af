//! Experiment runner for blind ptychographic reconstruction.
//!
//! Subcommands `simulate`, `reconstruct`, `evaluate`, `compare` and
//! `lattice`, configured by layered flat TOML (see [`config`]).
//!
//! Exit codes are listed in [`failure::code`]: 0 success, 1 I/O failure,
//! 2 configuration error, 3 data error, 4 divergence or degenerate
//! iterates, 5 overlap violation.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod failure;
pub mod presets;
