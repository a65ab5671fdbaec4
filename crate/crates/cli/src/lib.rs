//! Library side of the `inl` command: run configuration, experiment
//! runners and the file outputs they produce.

pub mod config;
pub mod output;
pub mod region;
pub mod runner;

pub use config::{FlOptions, RunConfig, Scheme, SlOptions};
pub use output::OutDir;
pub use runner::{run, RunOutcome, Summary};
