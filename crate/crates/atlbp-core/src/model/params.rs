//! Trainable parameters: compression layers, stacked LSTM layers, and the
//! classifier head, plus versioned JSON checkpoints.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::numgrad::{Mat64, Vec64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A fully-connected layer: y = W x + b.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineParams {
    pub w: Mat64,
    pub b: Vec64,
}

/// One LSTM layer. Gate rows are stacked input, forget, candidate, output:
/// `w` is [4H x Din], `u` is [4H x H], `b` is [4H].
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    pub w: Mat64,
    pub u: Mat64,
    pub b: Vec64,
}

/// The full trainable parameter set together with the configuration that
/// shaped it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    pub(crate) c_a: Option<AffineParams>,
    pub(crate) c_v: Option<AffineParams>,
    pub(crate) lstm: Vec<LstmLayerParams>,
    pub(crate) head: AffineParams,
}

fn uniform_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Mat64 {
    let k = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-k..k)).collect();
    Mat64::new(rows, cols, data).expect("generated weights are finite")
}

impl ModelParams {
    /// Initializes weights uniformly in (-k, k) with k = 1/sqrt(fan_in).
    /// Biases start at zero except the forget-gate rows, which start at 1.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::init_with_rng(config, &mut rng)
    }

    pub(crate) fn init_with_rng(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_units;
        let c_a = config.uses_affect().then(|| AffineParams {
            w: uniform_mat(rng, config.dim_ca, config.dim_rho, config.dim_rho),
            b: Vec64::zeros(config.dim_ca),
        });
        let c_v = config.uses_identity().then(|| AffineParams {
            w: uniform_mat(rng, config.dim_cv, config.dim_xi, config.dim_xi),
            b: Vec64::zeros(config.dim_cv),
        });
        let mut lstm = Vec::with_capacity(config.num_layers);
        let mut input = config.fused_dim();
        for _ in 0..config.num_layers {
            let mut b = Vec64::zeros(4 * h);
            for j in h..2 * h {
                b[j] = 1.0;
            }
            lstm.push(LstmLayerParams {
                w: uniform_mat(rng, 4 * h, input, input),
                u: uniform_mat(rng, 4 * h, h, h),
                b,
            });
            input = h;
        }
        let head = AffineParams {
            w: uniform_mat(rng, config.num_classes, h, h),
            b: Vec64::zeros(config.num_classes),
        };
        Ok(Self { config: config.clone(), c_a, c_v, lstm, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Tensors in canonical order: compressions, LSTM layers, head. The
    /// same order is used for checkpointing, Adam state, gradient
    /// alignment, and flattening.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        if let Some(ca) = &self.c_a {
            out.push(("c_a.w".to_string(), vec![ca.w.rows(), ca.w.cols()], ca.w.as_slice()));
            out.push(("c_a.b".to_string(), vec![ca.b.len()], ca.b.as_slice()));
        }
        if let Some(cv) = &self.c_v {
            out.push(("c_v.w".to_string(), vec![cv.w.rows(), cv.w.cols()], cv.w.as_slice()));
            out.push(("c_v.b".to_string(), vec![cv.b.len()], cv.b.as_slice()));
        }
        for (i, layer) in self.lstm.iter().enumerate() {
            let n = i + 1;
            out.push((format!("lstm{n}.w"), vec![layer.w.rows(), layer.w.cols()], layer.w.as_slice()));
            out.push((format!("lstm{n}.u"), vec![layer.u.rows(), layer.u.cols()], layer.u.as_slice()));
            out.push((format!("lstm{n}.b"), vec![layer.b.len()], layer.b.as_slice()));
        }
        out.push(("head.w".to_string(), vec![self.head.w.rows(), self.head.w.cols()], self.head.w.as_slice()));
        out.push(("head.b".to_string(), vec![self.head.b.len()], self.head.b.as_slice()));
        out
    }

    /// Mutable flat views over all tensors, in canonical order.
    pub(crate) fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(ca) = &mut self.c_a {
            out.push(ca.w.as_mut_slice());
            out.push(ca.b.as_mut_slice());
        }
        if let Some(cv) = &mut self.c_v {
            out.push(cv.w.as_mut_slice());
            out.push(cv.b.as_mut_slice());
        }
        for layer in &mut self.lstm {
            out.push(layer.w.as_mut_slice());
            out.push(layer.u.as_mut_slice());
            out.push(layer.b.as_mut_slice());
        }
        out.push(self.head.w.as_mut_slice());
        out.push(self.head.b.as_mut_slice());
        out
    }

    pub fn tensor_lens(&self) -> Vec<usize> {
        self.tensors().iter().map(|(_, _, d)| d.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// Concatenates all tensors into one flat vector (canonical order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, _, data) in self.tensors() {
            out.extend_from_slice(data);
        }
        out
    }

    /// Rebuilds parameters from a flat vector produced by [`Self::to_flat`].
    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut template = {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Self::init_with_rng(config, &mut rng)?
        };
        if flat.len() != template.param_count() {
            return Err(Error::Dimension {
                op: "ModelParams::from_flat",
                detail: format!(
                    "flat vector has {} entries, configuration needs {}",
                    flat.len(),
                    template.param_count()
                ),
            });
        }
        let mut offset = 0;
        for slice in template.tensor_slices_mut() {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(template)
    }

    /// Writes a versioned JSON checkpoint. Floats serialize in shortest
    /// round-trip decimal form, so loading reproduces every 64-bit value
    /// exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let doc = CheckpointDoc {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            params: self
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| (name, TensorRecord { shape, data: data.to_vec() }))
                .collect(),
        };
        let json = serde_json::to_string(&doc)
            .map_err(|e| Error::Data(format!("failed to serialize checkpoint: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let doc: CheckpointDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: 0,
            message: format!("invalid checkpoint: {e}"),
        })?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported checkpoint format_version {}",
                doc.format_version
            )));
        }
        let mut params = {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Self::init_with_rng(&doc.config, &mut rng)?
        };
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(name, shape, _)| (name, shape))
            .collect();
        for (name, shape) in &expected {
            let record = doc.params.get(name).ok_or_else(|| {
                Error::Schema(format!("checkpoint is missing tensor '{name}'"))
            })?;
            if &record.shape != shape {
                return Err(Error::Schema(format!(
                    "tensor '{name}' has shape {:?}, configuration needs {:?}",
                    record.shape, shape
                )));
            }
            let len: usize = shape.iter().product();
            if record.data.len() != len {
                return Err(Error::Schema(format!(
                    "tensor '{name}' holds {} values, shape {:?} needs {len}",
                    record.data.len(),
                    record.shape
                )));
            }
            if record.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "tensor '{name}' contains non-finite values"
                )));
            }
        }
        if doc.params.len() != expected.len() {
            return Err(Error::Schema(format!(
                "checkpoint holds {} tensors, configuration needs {}",
                doc.params.len(),
                expected.len()
            )));
        }
        let mut slices = params.tensor_slices_mut();
        for ((name, _), slice) in expected.iter().zip(slices.iter_mut()) {
            slice.copy_from_slice(&doc.params[name].data);
        }
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    config: ModelConfig,
    params: BTreeMap<String, TensorRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::EmbeddingMode;

    fn small_config() -> ModelConfig {
        ModelConfig {
            dim_psi: 5,
            dim_rho: 12,
            dim_xi: 8,
            dim_ca: 3,
            dim_cv: 3,
            hidden_units: 7,
            num_classes: 3,
            seed: 11,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn param_count_matches_closed_form() {
        for mode in [
            EmbeddingMode::None,
            EmbeddingMode::AffectOnly,
            EmbeddingMode::IdentityOnly,
            EmbeddingMode::Both,
        ] {
            let mut config = small_config();
            config.embedding_mode = mode;
            let params = ModelParams::init(&config).unwrap();
            assert_eq!(params.param_count(), config.param_count(), "mode {mode:?}");
        }
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let config = small_config();
        let params = ModelParams::init(&config).unwrap();
        let h = config.hidden_units;
        for layer in &params.lstm {
            for j in 0..4 * h {
                let expect = if (h..2 * h).contains(&j) { 1.0 } else { 0.0 };
                assert_eq!(layer.b[j], expect);
            }
        }
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let config = small_config();
        let a = ModelParams::init(&config).unwrap();
        let b = ModelParams::init(&config).unwrap();
        assert_eq!(a, b);
        let mut other = config.clone();
        other.seed = 12;
        assert_ne!(ModelParams::init(&other).unwrap(), a);
    }

    #[test]
    fn flat_round_trip_is_exact() {
        let config = small_config();
        let params = ModelParams::init(&config).unwrap();
        let rebuilt = ModelParams::from_flat(&config, &params.to_flat()).unwrap();
        assert_eq!(params, rebuilt);
    }

    #[test]
    fn checkpoint_round_trip_is_value_exact() {
        let config = small_config();
        let mut params = ModelParams::init(&config).unwrap();
        // Force values whose decimal forms exercise full precision.
        params.head.b[0] = 0.1 + 0.2;
        params.head.b[1] = 1.0 / 3.0;
        params.head.b[2] = -2.2250738585072014e-308;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.checkpoint.json");
        params.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(params, loaded);
        for (a, b) in params.to_flat().iter().zip(loaded.to_flat().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_wrong_version() {
        let config = small_config();
        let params = ModelParams::init(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.checkpoint.json");
        params.save(&path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(ModelParams::load(&path), Err(Error::Schema(_))));
    }
}
