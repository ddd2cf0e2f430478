//! Particle filtering for measurements that reach the estimator randomly
//! delayed by up to `N` steps, with drops and duplicate deliveries, plus
//! maximum-likelihood identification of the unknown latency probability.

pub mod channel;
pub mod error;
pub mod filter;
pub mod identification;
pub mod models;
pub mod numeric;

pub use error::{Error, Result};
pub mod experiments;
