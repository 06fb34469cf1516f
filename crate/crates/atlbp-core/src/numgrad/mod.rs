//! Dense numeric core: vectors and matrices, affine maps, softmax and
//! cross-entropy, a reverse-mode gradient tape, Adam updates, and a
//! finite-difference gradient oracle.
//!
//! Everything is 64-bit and deterministic: identical inputs produce
//! bit-identical outputs, which keeps gradient checks tight and makes
//! trained models exactly reproducible from a seed.

mod adam;
mod fdiff;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use fdiff::finite_difference_gradient;
pub use tape::{GradTape, NodeId, TapeGradients};
pub use tensor::{apply_affine, cross_entropy, softmax, Mat64, Vec64, PROB_CLAMP};

pub(crate) use tensor::sigmoid;
