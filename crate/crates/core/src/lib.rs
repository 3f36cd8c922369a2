#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod curve;
pub mod dataset;
pub mod error;
pub mod regression;
pub mod scheduler;
pub mod search_sim;
pub mod seed;
pub mod srm;
pub mod stopping;
pub mod synth;

pub use error::{Error, Result};
