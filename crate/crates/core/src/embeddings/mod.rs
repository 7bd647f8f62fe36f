//! Fixed item embeddings: CBOW pretraining, unit normalization, lookup and
//! the plain-text vector format.

mod cbow;
mod matrix;

pub use cbow::{train_cbow, CbowConfig, UnigramSampler};
pub use matrix::{EmbeddingMatrix, UNIT_NORM_TOLERANCE};
