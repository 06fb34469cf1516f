//! The behavior-prediction network: learned embedding compressions,
//! feature fusion, a stacked two-layer LSTM, and a softmax classifier
//! head, together with training, per-user fine-tuning, prediction, and
//! versioned JSON checkpoints.

mod config;
mod forward;
mod params;
mod train;

pub use config::{EmbeddingMode, ModelConfig, Pooling};
pub use forward::{classify_sequence, compress_embeddings, fuse_features, lstm_cell_step, LstmState};
pub use params::{AffineParams, LstmLayerParams, ModelParams, CHECKPOINT_FORMAT_VERSION};
pub use train::{
    personalize, predict, segment_loss_and_gradients, train, PersonalizeResult, TrainResult,
};
