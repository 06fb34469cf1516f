//! Model configuration: feature dimensions, network size, optimizer
//! settings, and which embeddings participate in fusion.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which embeddings are compressed and fused alongside the traditional
/// features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    None,
    AffectOnly,
    IdentityOnly,
    Both,
}

impl std::str::FromStr for EmbeddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EmbeddingMode::None),
            "affect" | "affect_only" => Ok(EmbeddingMode::AffectOnly),
            "identity" | "identity_only" => Ok(EmbeddingMode::IdentityOnly),
            "both" => Ok(EmbeddingMode::Both),
            other => Err(Error::Usage(format!(
                "unknown embedding mode '{other}', expected none|affect|identity|both"
            ))),
        }
    }
}

/// How the classifier head reads the top-layer hidden sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Head reads the final timestep's hidden state.
    Last,
    /// Head reads the mean of all timesteps' hidden states.
    Mean,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Pooling::Last),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::Usage(format!(
                "unknown pooling '{other}', expected last|mean"
            ))),
        }
    }
}

/// All architecture and training settings. Batch size is fixed at 1; the
/// network trains one segment at a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Traditional facial-feature dimension.
    pub dim_psi: usize,
    /// Raw affect-embedding dimension.
    pub dim_rho: usize,
    /// Raw face-identity-embedding dimension.
    pub dim_xi: usize,
    /// Compressed affect dimension.
    pub dim_ca: usize,
    /// Compressed identity dimension.
    pub dim_cv: usize,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub embedding_mode: EmbeddingMode,
    /// Apply tanh after the compression layers (off by default; the
    /// compressions are pure affine maps).
    #[serde(default)]
    pub compress_tanh: bool,
    #[serde(default = "default_pooling")]
    pub pooling: Pooling,
    /// Optional global-norm gradient clip; no clipping by default.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_pooling() -> Pooling {
    Pooling::Last
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim_psi: 49,
            dim_rho: 8192,
            dim_xi: 2622,
            dim_ca: 50,
            dim_cv: 50,
            hidden_units: 200,
            num_layers: 2,
            num_classes: 7,
            learning_rate: 3e-5,
            epochs: 30,
            batch_size: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            embedding_mode: EmbeddingMode::Both,
            compress_tanh: false,
            pooling: Pooling::Last,
            grad_clip: None,
        }
    }
}

impl ModelConfig {
    /// Defaults for a given embedding mode. In the single-embedding modes
    /// the surviving compression widens to 100 so the fused vector keeps
    /// its full size of 149.
    pub fn defaults_for(mode: EmbeddingMode) -> Self {
        let mut c = Self {
            embedding_mode: mode,
            ..Self::default()
        };
        match mode {
            EmbeddingMode::AffectOnly => c.dim_ca = 100,
            EmbeddingMode::IdentityOnly => c.dim_cv = 100,
            EmbeddingMode::None | EmbeddingMode::Both => {}
        }
        c
    }

    pub fn uses_affect(&self) -> bool {
        matches!(self.embedding_mode, EmbeddingMode::AffectOnly | EmbeddingMode::Both)
    }

    pub fn uses_identity(&self) -> bool {
        matches!(self.embedding_mode, EmbeddingMode::IdentityOnly | EmbeddingMode::Both)
    }

    /// Fused per-frame feature dimension: psi plus whichever compressed
    /// embeddings the mode includes.
    pub fn fused_dim(&self) -> usize {
        self.dim_psi
            + if self.uses_affect() { self.dim_ca } else { 0 }
            + if self.uses_identity() { self.dim_cv } else { 0 }
    }

    /// Total trainable parameter count as a closed-form function of the
    /// configuration.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_units;
        let mut n = 0;
        if self.uses_affect() {
            n += self.dim_ca * self.dim_rho + self.dim_ca;
        }
        if self.uses_identity() {
            n += self.dim_cv * self.dim_xi + self.dim_cv;
        }
        let mut input = self.fused_dim();
        for _ in 0..self.num_layers {
            n += 4 * h * input + 4 * h * h + 4 * h;
            input = h;
        }
        n += self.num_classes * h + self.num_classes;
        n
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim_psi", self.dim_psi),
            ("hidden_units", self.hidden_units),
            ("num_layers", self.num_layers),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.uses_affect() && (self.dim_rho == 0 || self.dim_ca == 0) {
            return Err(Error::Config(
                "affect embedding enabled but dim_rho or dim_ca is zero".into(),
            ));
        }
        if self.uses_identity() && (self.dim_xi == 0 || self.dim_cv == 0) {
            return Err(Error::Config(
                "identity embedding enabled but dim_xi or dim_cv is zero".into(),
            ));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!(
                "batch_size is fixed at 1, got {}",
                self.batch_size
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(clip) = self.grad_clip {
            if clip.is_nan() || clip <= 0.0 {
                return Err(Error::Config(format!("grad_clip must be positive, got {clip}")));
            }
        }
        Ok(())
    }
}
