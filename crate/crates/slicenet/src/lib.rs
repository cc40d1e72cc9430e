//! Experiment harness for the slicenet toolkit: configuration files, the
//! baseline / training / similarity / transfer / evaluation protocol, and
//! the CSV and binary artifacts each stage reads and writes.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{Experiment, Method, RunLog, Trained};
