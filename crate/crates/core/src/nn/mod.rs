//! Minimal dense networks: forward/backward passes, Adam and reparameterised
//! Gaussian sampling. Everything is `f64` and row-major.

mod adam;
mod mlp;
mod sample;

pub use adam::{Adam, AdamConfig};
pub use mlp::{softmax, softmax_backward, Activation, Cache, Dense, Gradients, Mlp};
pub use sample::gaussian_sample;
