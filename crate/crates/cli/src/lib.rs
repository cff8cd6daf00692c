//! Library side of the `tinyclf` command: configuration, the run pipeline,
//! artifact writing and design-space sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod explore;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
