//! Topology optimization toolkit: SIMP compliance minimization, dataset
//! generation, a conditional Wasserstein GAN that proposes structures for a
//! requested volume fraction, and tools to evaluate them.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fem;
pub mod field;
pub mod gan;
pub mod nn;
pub mod postprocess;
pub mod service;
pub mod simp;

pub use error::{Error, Result};
pub use field::DensityField;
