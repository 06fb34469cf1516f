/*!
Library for predicting problem outcomes from per-frame facial feature
sequences. Each video segment of a student working one problem is turned
into a sequence of fused feature vectors (traditional facial features
concatenated with learned compressions of high-dimensional affect and
face-identity embeddings) and classified into one of seven outcomes by a
stacked two-layer LSTM trained with Adam and cross-entropy.

The crate is organized around the pipeline stages:

- [`numgrad`]: dense 64-bit numeric core with a reverse-mode gradient tape,
  Adam, and a finite-difference oracle for gradient verification.
- [`model`]: the network itself (compression layers, feature fusion, the
  stacked LSTM, classifier head), training, per-user fine-tuning, and
  prediction, plus versioned JSON checkpoints.
- [`data`]: the JSONL dataset format, frame-rate downsampling, feature
  normalization, and the split planners (random k-fold, leave-users-out,
  and personalization splits).
- [`metrics`]: confusion matrices, per-class and mean F-scores, accuracy,
  and the predominant-label and mean-pool baselines.
- [`synth`]: a deterministic synthetic session generator with per-user
  baselines and outcome-conditioned temporal signatures, so learnability
  and personalization effects are testable without private video data.
- [`pipeline`]: cross-validation protocol runners that tie the stages
  together and produce reproducible reports.

All computation is deterministic given a seed: training the same
configuration on the same data twice yields bit-identical parameters.
*/

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numgrad;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
