//! Experiment runner for `manifold-descent-core`: config files, parameter
//! sweeps, CSV/JSON/SVG output and the verification suite used by the
//! `manifold-descent` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod bench;
pub mod config;
pub mod output;
pub mod suite;
pub mod svg;

pub use bench::{RunRecord, RunSetup, SweepSpec};
pub use config::{Config, ConfigError, Experiment};
