//! Ensemble inverse generative models.
//!
//! Conditional DDPM and flow-matching posterior samplers that see both a
//! single measurement and a permutation-invariant embedding of the whole
//! observation set, plus synthetic data generators and distributional
//! metrics (sliced Wasserstein, 1-D Wasserstein, TARP coverage).

pub mod binio;
pub mod error;
pub mod generative;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
