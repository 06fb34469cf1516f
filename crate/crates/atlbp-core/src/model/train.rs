//! Training loop (one Adam step per segment, shuffled each epoch),
//! per-user fine-tuning, and prediction.

use crate::data::Segment;
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::forward::{classify_sequence, forward_logits_on_tape, register_params};
use crate::model::params::ModelParams;
use crate::numgrad::{clip_global_norm, AdamConfig, AdamState, GradTape, Vec64};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Output of a training run: the final parameters, the mean loss per
/// epoch, and the total number of optimizer steps taken.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ModelParams,
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

fn validate_labels(config: &ModelConfig, segments: &[Segment]) -> Result<()> {
    for seg in segments {
        let code = seg.label.code();
        if code >= config.num_classes {
            return Err(Error::Data(format!(
                "segment {}: label {} (code {code}) outside 0..{}",
                seg.id(),
                seg.label,
                config.num_classes
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model: seeds the PRNG from the configuration, initializes
/// weights, then runs `epochs` passes over the segments, reshuffling each
/// epoch and taking one Adam step per segment.
pub fn train(config: &ModelConfig, segments: &[Segment]) -> Result<TrainResult> {
    config.validate()?;
    if segments.is_empty() {
        return Err(Error::Usage("training requires at least one segment".into()));
    }
    validate_labels(config, segments)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = ModelParams::init_with_rng(config, &mut rng)?;
    fit(config, params, segments, &mut rng)
}

/// The shared optimization loop. `params` may be freshly initialized or a
/// copy of an already-trained model (fine-tuning); the optimizer state
/// always starts fresh.
fn fit(
    config: &ModelConfig,
    mut params: ModelParams,
    segments: &[Segment],
    rng: &mut ChaCha8Rng,
) -> Result<TrainResult> {
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        epsilon: config.epsilon,
    };
    let mut adam = AdamState::new(adam_config, &params.tensor_lens());
    let mut order: Vec<usize> = (0..segments.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for &idx in &order {
            let segment = &segments[idx];
            let mut tape = GradTape::new();
            let nodes = register_params(&mut tape, &params);
            let logits = forward_logits_on_tape(&mut tape, &nodes, &params, segment)?;
            let loss_node = tape.softmax_cross_entropy(logits, segment.label.code())?;
            let loss = tape.value(loss_node)[0];
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at epoch {epoch} on segment {}",
                    segment.id()
                )));
            }
            loss_sum += loss;

            let mut grads = tape.backward(loss_node)?.into_param_grads();
            if let Some(max_norm) = config.grad_clip {
                clip_global_norm(&mut grads, max_norm);
            }
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            adam.step(&mut params.tensor_slices_mut(), &grad_refs)?;
        }
        epoch_losses.push(loss_sum / segments.len() as f64);
    }

    Ok(TrainResult {
        params,
        epoch_losses,
        steps: adam.step_count(),
    })
}

/// Records one forward/backward pass for a single segment and returns the
/// cross-entropy loss with the gradients for every tensor, in the same
/// canonical order as [`ModelParams::tensors`].
pub fn segment_loss_and_gradients(
    params: &ModelParams,
    segment: &Segment,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if segment.label.code() >= params.config().num_classes {
        return Err(Error::Data(format!(
            "segment {}: label {} outside 0..{}",
            segment.id(),
            segment.label,
            params.config().num_classes
        )));
    }
    let mut tape = GradTape::new();
    let nodes = register_params(&mut tape, params);
    let logits = forward_logits_on_tape(&mut tape, &nodes, params, segment)?;
    let loss_node = tape.softmax_cross_entropy(logits, segment.label.code())?;
    let loss = tape.value(loss_node)[0];
    let grads = tape.backward(loss_node)?.into_param_grads();
    Ok((loss, grads))
}

/// Outcome of a personalization run. `warning` is set when the
/// personalization set was empty and the base model was returned unchanged.
#[derive(Clone, Debug)]
pub struct PersonalizeResult {
    pub params: ModelParams,
    pub epoch_losses: Vec<f64>,
    pub warning: Option<String>,
}

/// Fine-tunes a copy of `base` on one user's personalization segments with
/// the same optimizer settings. The base parameters are never modified.
pub fn personalize(
    base: &ModelParams,
    config: &ModelConfig,
    segments: &[Segment],
) -> Result<PersonalizeResult> {
    config.validate()?;
    if !architecture_matches(base.config(), config) {
        return Err(Error::Config(
            "personalization config changes the architecture of the base model".into(),
        ));
    }
    if segments.is_empty() {
        return Ok(PersonalizeResult {
            params: base.clone(),
            epoch_losses: Vec::new(),
            warning: Some("empty personalization set; base model returned unchanged".into()),
        });
    }
    validate_labels(config, segments)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let result = fit(config, base.clone(), segments, &mut rng)?;
    Ok(PersonalizeResult {
        params: result.params,
        epoch_losses: result.epoch_losses,
        warning: None,
    })
}

fn architecture_matches(a: &ModelConfig, b: &ModelConfig) -> bool {
    a.dim_psi == b.dim_psi
        && a.dim_rho == b.dim_rho
        && a.dim_xi == b.dim_xi
        && a.dim_ca == b.dim_ca
        && a.dim_cv == b.dim_cv
        && a.hidden_units == b.hidden_units
        && a.num_layers == b.num_layers
        && a.num_classes == b.num_classes
        && a.embedding_mode == b.embedding_mode
        && a.compress_tanh == b.compress_tanh
        && a.pooling == b.pooling
}

/// Classifies a segment and returns the predicted class with the full
/// probability vector. Ties break toward the lowest class index.
pub fn predict(params: &ModelParams, segment: &Segment) -> Result<(usize, Vec64)> {
    let probs = classify_sequence(params, segment)?;
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Ok((best, probs))
}
