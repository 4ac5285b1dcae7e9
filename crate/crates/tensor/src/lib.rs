//! Dense `f64` tensors and a define-by-run reverse-mode differentiation
//! graph with the operations needed by a small transformer/GRU tagger.
//!
//! Forward ops are methods on [`Graph`]; each returns a [`Var`] handle.
//! [`Graph::backward`] sweeps the recorded nodes in reverse and returns the
//! gradient of a scalar root with respect to every tracked node.

mod error;
mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{CustomBackward, Gradients, Graph, Var};
pub use ops::activation::sigmoid;
pub use tensor::Tensor;
