//! History-based recommendation as conditional density estimation over
//! continuous item embeddings.
//!
//! A history of items is summarized by a bag-of-items, recurrent or
//! attention-based encoder; a feedforward or recurrent mixture density
//! decoder turns that summary into a diagonal Gaussian mixture over item
//! vectors, and items are ranked by their log-density under it.

pub mod baselines;
pub mod data;
pub mod embeddings;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod mdn;
pub mod numerics;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
