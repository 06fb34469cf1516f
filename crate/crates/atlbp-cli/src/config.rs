//! Flat key-value run configuration: parsing, flag overrides, canonical
//! resolved form, and the config hash carried by every output artifact.

use atlbp_core::model::{EmbeddingMode, ModelConfig, Pooling};
use atlbp_core::pipeline::{ProtocolMode, ProtocolOptions};
use atlbp_core::synth::SyntheticSpec;
use atlbp_core::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Every key the run configuration accepts. Unknown keys are rejected.
const KNOWN_KEYS: &[&str] = &[
    // model
    "dim_psi",
    "dim_rho",
    "dim_xi",
    "dim_ca",
    "dim_cv",
    "hidden_units",
    "num_layers",
    "num_classes",
    "learning_rate",
    "epochs",
    "batch_size",
    "beta1",
    "beta2",
    "epsilon",
    "seed",
    "embedding_mode",
    "compress_tanh",
    "pooling",
    "grad_clip",
    // protocol
    "split",
    "k",
    "fraction",
    "target_fps",
    // paths
    "manifest",
    "plan",
    "checkpoint",
    "out",
    // synthetic generator
    "synth_users",
    "synth_two_session_fraction",
    "synth_problems_min",
    "synth_problems_max",
    "synth_frames_min",
    "synth_frames_max",
    "synth_fps",
    "synth_label_weights",
    "synth_alpha",
    "synth_beta",
    "synth_noise",
    "synth_dim_psi",
    "synth_dim_rho",
    "synth_dim_xi",
];

/// Parsed key-value pairs, before typing.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected 'key = value', got '{raw}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Usage(format!(
                    "unknown configuration key '{key}' (line {})",
                    idx + 1
                )));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Usage(format!(
                    "configuration key '{key}' given twice (line {})",
                    idx + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unknown key {key}");
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Usage(format!("configuration key '{key}' has invalid value '{raw}'"))
            }),
        }
    }

    /// Builds the model configuration: embedding-mode defaults first, then
    /// explicit overrides.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mode = match self.get("embedding_mode") {
            Some(raw) => raw.parse::<EmbeddingMode>()?,
            None => EmbeddingMode::Both,
        };
        let c = self.model_config_overlay(&ModelConfig::defaults_for(mode))?;
        c.validate()?;
        Ok(c)
    }

    /// Applies every explicitly configured key onto `base` without
    /// validating the result; callers pick what they need.
    pub fn model_config_overlay(&self, base: &ModelConfig) -> Result<ModelConfig> {
        let mut c = base.clone();
        if let Some(raw) = self.get("embedding_mode") {
            c.embedding_mode = raw.parse::<EmbeddingMode>()?;
        }
        if let Some(v) = self.typed("dim_psi")? {
            c.dim_psi = v;
        }
        if let Some(v) = self.typed("dim_rho")? {
            c.dim_rho = v;
        }
        if let Some(v) = self.typed("dim_xi")? {
            c.dim_xi = v;
        }
        if let Some(v) = self.typed("dim_ca")? {
            c.dim_ca = v;
        }
        if let Some(v) = self.typed("dim_cv")? {
            c.dim_cv = v;
        }
        if let Some(v) = self.typed("hidden_units")? {
            c.hidden_units = v;
        }
        if let Some(v) = self.typed("num_layers")? {
            c.num_layers = v;
        }
        if let Some(v) = self.typed("num_classes")? {
            c.num_classes = v;
        }
        if let Some(v) = self.typed("learning_rate")? {
            c.learning_rate = v;
        }
        if let Some(v) = self.typed("epochs")? {
            c.epochs = v;
        }
        if let Some(v) = self.typed("batch_size")? {
            c.batch_size = v;
        }
        if let Some(v) = self.typed("beta1")? {
            c.beta1 = v;
        }
        if let Some(v) = self.typed("beta2")? {
            c.beta2 = v;
        }
        if let Some(v) = self.typed("epsilon")? {
            c.epsilon = v;
        }
        if let Some(v) = self.typed("seed")? {
            c.seed = v;
        }
        if let Some(v) = self.typed("compress_tanh")? {
            c.compress_tanh = v;
        }
        if let Some(raw) = self.get("pooling") {
            c.pooling = raw.parse::<Pooling>()?;
        }
        if let Some(v) = self.typed::<f64>("grad_clip")? {
            c.grad_clip = Some(v);
        }
        Ok(c)
    }

    pub fn protocol_options(&self) -> Result<ProtocolOptions> {
        let mut opts = ProtocolOptions::default();
        if let Some(raw) = self.get("split") {
            opts.mode = raw.parse::<ProtocolMode>()?;
        }
        if let Some(v) = self.typed("k")? {
            opts.k = v;
        }
        if let Some(v) = self.typed("fraction")? {
            opts.fraction = v;
        }
        if let Some(v) = self.typed("target_fps")? {
            opts.target_fps = v;
        }
        opts.threads = atlbp_core::pipeline::threads_from_env()?;
        Ok(opts)
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let mut spec = SyntheticSpec::default();
        if let Some(v) = self.typed("synth_users")? {
            spec.n_users = v;
        }
        if let Some(v) = self.typed("synth_two_session_fraction")? {
            spec.two_session_fraction = v;
        }
        if let Some(v) = self.typed("synth_problems_min")? {
            spec.problems_per_session.0 = v;
        }
        if let Some(v) = self.typed("synth_problems_max")? {
            spec.problems_per_session.1 = v;
        }
        if let Some(v) = self.typed("synth_frames_min")? {
            spec.frames_per_problem.0 = v;
        }
        if let Some(v) = self.typed("synth_frames_max")? {
            spec.frames_per_problem.1 = v;
        }
        if let Some(v) = self.typed("synth_fps")? {
            spec.fps = v;
        }
        if let Some(raw) = self.get("synth_label_weights") {
            let parts: Vec<&str> = raw.split(',').map(|s| s.trim()).collect();
            if parts.len() != 7 {
                return Err(Error::Usage(format!(
                    "synth_label_weights needs 7 comma-separated values, got {}",
                    parts.len()
                )));
            }
            for (i, p) in parts.iter().enumerate() {
                spec.label_weights[i] = p.parse().map_err(|_| {
                    Error::Usage(format!("synth_label_weights entry '{p}' is not a number"))
                })?;
            }
        }
        if let Some(v) = self.typed("synth_alpha")? {
            spec.signal_strength = v;
        }
        if let Some(v) = self.typed("synth_beta")? {
            spec.baseline_scale = v;
        }
        if let Some(v) = self.typed("synth_noise")? {
            spec.noise_scale = v;
        }
        if let Some(v) = self.typed("synth_dim_psi")? {
            spec.dim_psi = v;
        }
        if let Some(v) = self.typed("synth_dim_rho")? {
            spec.dim_rho = v;
        }
        if let Some(v) = self.typed("synth_dim_xi")? {
            spec.dim_xi = v;
        }
        if let Some(v) = self.typed("seed")? {
            spec.seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical resolved form: sorted `key = value` lines.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        hex::encode(&digest[..16])
    }

    /// Writes the resolved configuration next to a run's outputs.
    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.canonical_text())?;
        Ok(())
    }
}
