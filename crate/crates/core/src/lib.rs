//! Latent structured Hopfield network.
//!
//! An MLP autoencoder whose `tanh`-bounded latent space hosts a clipped
//! continuous Hopfield network with symmetric weights. Encoder, decoder and
//! recurrent weights are trained jointly by backpropagation through the
//! unrolled dynamics; retrieval encodes a corrupted cue, runs the dynamics
//! to an attractor and decodes the result.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod ndgrad;
pub mod train;

pub use error::{Error, Result};
