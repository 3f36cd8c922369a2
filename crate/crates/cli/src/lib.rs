//! File formats, the advisor protocol and the command-line front end for
//! `curvestop-core`.

pub mod advisor;
pub mod cli;
pub mod dataset_io;
pub mod error;
pub mod fsio;
pub mod manifest;
pub mod model_io;
pub mod subprocess;

pub use error::{CliError, Result};
