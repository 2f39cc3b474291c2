//! Stochastic gradient Langevin dynamics and the machinery needed to compare
//! it with theory at low dimension: regularity-checked objectives, gradient
//! oracles, a reference diffusion, quadrature Gibbs measures, Wasserstein
//! distances and explicit nonasymptotic bounds.

pub mod bounds;
pub mod diffusion;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod objectives;
pub mod oracles;
pub mod rng;
pub mod sgld;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use objectives::{Dataset, Distribution, Objective, RegularityConstants};
