//! Experiment harness for the phaseamp toolkit.
//!
//! An experiment is a TOML spec (`kind`, `[model]`, `[params]`, `[output]` and an
//! optional `[assert]` block). [`run_experiment`] turns a validated spec into a
//! sorted [`Table`] and a one-line [`Summary`].

pub mod config;
pub mod experiments;
pub mod table;

pub use config::{validate_config, ConfigErrors, ExperimentSpec, Kind};
pub use experiments::{run_experiment, Outcome, Summary};
pub use table::{Cell, Table};
