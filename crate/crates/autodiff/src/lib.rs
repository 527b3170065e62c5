//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute; [`Tape::backward`]
//! replays them in reverse. Complex quantities are carried as real/imaginary
//! pairs ([`ComplexVar`]).
//!
//! ```
//! use hbf_autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
//! let loss = x.mul(x).unwrap().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod complex;
mod error;
pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use complex::{ComplexTensor, ComplexVar};
pub use error::{AutodiffError, Result};
pub use ops::concat;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Negative-side slope used by [`Var::leaky_relu`] throughout the project.
pub const LEAKY_SLOPE: f64 = 0.01;
