//! Dense tensors, a reverse-mode autodiff tape, Adam and checkpoints.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointEntry, Precision, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use graph::{Graph, NodeId};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

pub(crate) use graph::{log_sum_exp, sigmoid};
