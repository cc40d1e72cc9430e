//! Core of the slicenet toolkit: a load-coupled multi-cell slicing simulator,
//! a small dense-network kernel, per-cell TD3 agents, latent-space similarity
//! between agents and the transfer strategies built on top of it.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the CLI and
//! experiment orchestration live in the `slicenet` companion crate.

#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod codec;
pub mod env;
mod error;
pub(crate) mod math;
pub mod nn;
pub mod runner;
pub mod similarity;
pub mod transfer;

pub use error::{Error, Result};

/// Identifier of a cell; also identifies the agent that controls it.
pub type CellId = u32;

/// Deterministic generator used everywhere randomness is needed.
pub type SimRng = rand_chacha::ChaCha8Rng;
