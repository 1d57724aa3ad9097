//! Command implementations for the `eip` experiment harness.

pub mod commands;
pub mod config;
pub mod manifest;

use eip_core::Error;

/// Process exit code and short label for an error.
pub fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Config(_) | Error::Contract(_) | Error::InvalidPrior(_) => (2, "config"),
        Error::Io(_) | Error::Format(_) => (3, "io"),
        Error::NonFiniteLoss { .. } | Error::NonFiniteGradient => (4, "numeric"),
        Error::SamplerDivergence { .. } => (5, "divergence"),
    }
}
