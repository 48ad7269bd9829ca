//! Streaming linear discriminant analysis over precomputed feature vectors,
//! with streaming baselines, seeded stream orderings and a benchmark harness.

mod binio;

pub mod baselines;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod learner;
pub mod numerics;
pub mod orderings;
pub mod ranking;
pub mod slda;

pub use error::{Error, Result};
