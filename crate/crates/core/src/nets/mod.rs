//! Sinusoidal coordinate networks: single SIREN/ReLIFT models and the
//! region-parallel bank used by LIFT.

pub mod bank;
pub mod layer;
pub mod mlp;

pub use bank::{coords_tensor, ModulationSet, PMLPBank};
pub use layer::{affine, Dense, DenseVars, SineLayer, SineStack, StackShape, StackVars};
pub use mlp::{build_relift, build_siren, InputMap, Mlp};
