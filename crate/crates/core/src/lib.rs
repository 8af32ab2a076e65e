pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod fit;
pub mod hlg;
pub mod meta;
pub mod model;
pub mod nets;
pub mod partition;
pub mod rng;
pub mod signals;

pub use error::{LiftError, Result};
