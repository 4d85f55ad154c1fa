//! Configuration, pipeline and result handling behind the `pcd` binary.

pub mod ablate;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod runtime;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{cmd_gen_data, cmd_run, RunResult};
