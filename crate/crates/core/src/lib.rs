//! Curation-aware likelihoods and the tempered-posterior experiments built on them.

pub mod bnn;
pub mod curation;
pub mod error;
pub mod gp;
pub mod optim;
pub mod rng;
pub mod sweep;
pub mod voteflow;

pub use error::{Error, Result};
