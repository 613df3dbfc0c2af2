pub mod cli;
pub mod dataset;
pub mod decision;
pub mod discriminator;
pub mod error;
pub mod exec;
pub mod extractor;
pub mod harness;
pub mod rng;
pub mod simulator;
pub use error::{Error, Result};
