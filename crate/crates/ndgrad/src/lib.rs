//! `ndgrad` — dense float64 tensors and a reverse-mode autodiff tape.
//!
//! The tape supports gradients of gradients: any gradient can be requested
//! with `create_graph`, yielding differentiable nodes. Matrix products go
//! through `matrixmultiply`'s GEMM kernels; everything else is plain loops.
//!
//! ```
//! use ndgrad::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::scalar(0.0));
//! let y = tape.sin_act(w, 1.0);
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(w).unwrap().item().unwrap(), 1.0);
//! ```

pub mod check;
mod error;
pub mod kernels;
pub mod optim;
mod tape;
mod tensor;

pub use error::{GradError, Result};
pub use optim::Adam;
pub use tape::{Tape, Var};
pub use tensor::{numel, Tensor};
