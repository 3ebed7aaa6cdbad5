//! Dense `f64` tensors with a define-by-run reverse-mode tape.
//!
//! The tape is rebuilt for every forward pass, which lets the unrolled
//! attractor dynamics use a different step count at training and inference
//! time without any graph surgery.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheckEntry, GradCheckOptions, GradCheckReport};
pub use graph::{gelu, gelu_grad, Gradients, Graph, Param, Var};
pub use tensor::Tensor;
