//! Information Bottleneck bounds, imprecise imitation dynamics for noisy
//! sim-max signaling games, and the tools to compare the two.

pub mod analysis;
pub mod baselines;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod ib;
pub mod probkit;

pub use error::{Error, Result};
