//! Signal grids, file formats, synthetic sources and degradations.

mod degrade;
mod grid;
pub mod io;
mod query;
pub mod synth;

pub use degrade::{degrade, downsample, Degradation, Degraded};
pub use grid::{Sampling, SignalGrid};
pub use query::{dense_query, Field, LiftField};
