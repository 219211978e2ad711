//! Congruity-regularized matrix factorization.

pub mod cli;
pub mod congruity;
pub mod data;
pub mod error;
pub mod experiment;
pub mod factorization;
pub mod ingest;
pub mod stats;

pub use error::{Error, Result};
