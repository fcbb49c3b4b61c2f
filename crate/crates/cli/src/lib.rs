//! Command implementations behind the `softcut` binary.

pub mod commands;
pub mod config;
mod output;

pub use commands::{cmd_cluster, cmd_eval, cmd_select_k, cmd_simulate, ClusterOutcome};
pub use config::RunConfig;
