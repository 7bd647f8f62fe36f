//! Model assembly, the sequence likelihood objective and training with
//! validation-based early stopping.

mod model;
mod train;

pub use model::{DecoderKind, EncoderKind, Model, ModelConfig, ModelRecommender};
pub use train::{
    batch_gradients, format_log, train, train_model, LogRow, TrainConfig, TrainOutcome, TrainState, LOG_HEADER,
};
