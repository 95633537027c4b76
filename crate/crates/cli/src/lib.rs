//! Command layer of the `radam` tool: feature encoding, classifier
//! training and evaluation, self-test, and a synthetic texture benchmark.

pub mod config;
pub mod encode;
pub mod error;
pub mod selftest;
pub mod store;
pub mod synth;
pub mod train;

pub use config::{Pooling, RunConfig};
pub use encode::cmd_encode;
pub use error::{CliError, Result};
pub use selftest::cmd_selftest;
pub use train::{cmd_eval, cmd_fit, Report};
