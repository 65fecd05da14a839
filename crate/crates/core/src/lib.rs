//! Bayesian exploration for deep Q-learning in dialogue management.
//!
//! The crate bundles a small reverse-mode autodiff engine, Bayesian and
//! stochastic network layers, the training objectives, the exploration
//! agents, a GP-SARSA baseline, a toy slot-filling dialogue simulator and a
//! benchmarking harness.

pub mod agents;
pub mod bayes;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod gpsarsa;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
