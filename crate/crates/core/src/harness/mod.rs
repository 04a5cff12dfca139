//! Experiment harness: concentration and theorem bounds, run configuration,
//! end-to-end training runs and the commands behind the `majlab` CLI.

pub mod bounds;
pub mod commands;
pub mod config;
pub mod io;
pub mod run;

pub use config::{EpsilonSetting, FamilySetting, ModelKind, OutputFormat, RunConfig};
pub use run::{execute, RunOutcome, RunReport};
