//! Bayesian online learning of energy-efficient routes on road networks.
//!
//! Edge energies are unknown and learned from semi-bandit feedback while
//! routing: each trip reveals one noisy energy reading per traversed edge.

pub mod cli;
pub mod energy;
pub mod environment;
pub mod error;
pub mod graph;
pub mod netio;
pub mod policies;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
