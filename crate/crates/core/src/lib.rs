//! Crowd label aggregation by clustering per-item vote vectors with K
//! component RBMs, with majority-vote and Dawid-Skene baselines, and the
//! conversions between Gaussian-softmax RBMs and spherical Gaussian mixtures.

pub mod baseline;
pub mod bench;
pub mod data;
pub mod error;
pub mod krbm;
pub mod math;
pub mod mixture;
pub mod rbm;
pub mod snapshot;

pub use error::{Error, Result};
