use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (shape mismatch, empty set, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    /// Non-finite loss; `index` is the offending batch element.
    #[error("non-finite loss at batch index {index}{}", step_suffix(*.step))]
    NonFiniteLoss { index: usize, step: Option<usize> },

    #[error("non-finite gradient, optimizer step rejected")]
    NonFiniteGradient,

    /// Sampler produced a non-finite state; `step` is the sampler step index.
    #[error("sampler diverged at step {step}")]
    SamplerDivergence { step: usize },
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(s) => format!(" (optimizer step {s})"),
        None => String::new(),
    }
}

impl Error {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. } | Error::NonFiniteGradient)
    }
}
