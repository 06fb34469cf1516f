//! End-to-end gradient verification: analytic gradients of the full
//! sequence-classification loss against central finite differences.

use atlbp_core::data::{FrameFeatures, OutcomeLabel, Segment};
use atlbp_core::model::{
    classify_sequence, segment_loss_and_gradients, EmbeddingMode, ModelConfig, ModelParams,
    Pooling,
};
use atlbp_core::numgrad::{cross_entropy, finite_difference_gradient, Vec64};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec64 {
    Vec64::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_segment(rng: &mut ChaCha8Rng, config: &ModelConfig, frames: usize, label: OutcomeLabel) -> Segment {
    let frames = (0..frames)
        .map(|_| FrameFeatures {
            psi: random_vec(rng, config.dim_psi),
            rho: config.uses_affect().then(|| random_vec(rng, config.dim_rho)),
            xi: config.uses_identity().then(|| random_vec(rng, config.dim_xi)),
        })
        .collect();
    Segment {
        user_id: "u".into(),
        session_id: "s".into(),
        problem_index: 0,
        label,
        fps: 3.0,
        frames,
    }
}

/// Largest mixed relative/absolute deviation between analytic and numeric
/// gradients. The unit floor makes the bound absolute for small entries of
/// an O(1) loss surface.
fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn check_config(config: &ModelConfig, frames: usize, eps: f64, tolerance: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(config).unwrap();
    let label = OutcomeLabel::from_code(seed as usize % config.num_classes).unwrap();
    let segment = random_segment(&mut rng, config, frames, label);

    let (loss, grads) = segment_loss_and_gradients(&params, &segment).unwrap();
    assert!(loss.is_finite());
    let analytic: Vec<f64> = grads.concat();

    let numeric = finite_difference_gradient(
        |theta| {
            let p = ModelParams::from_flat(config, theta)?;
            let probs = classify_sequence(&p, &segment)?;
            cross_entropy(&probs, segment.label.code())
        },
        &params.to_flat(),
        eps,
    )
    .unwrap();

    assert_eq!(analytic.len(), numeric.len());
    let err = max_relative_error(&analytic, &numeric);
    assert!(
        err < tolerance,
        "seed {seed}: max relative error {err:.3e} over {} parameters",
        analytic.len()
    );
}

// The reduced configuration: dim_psi=5, dim_rho=12, dim_xi=8, compressed
// dims 3/3, H=7, C=3, T=4 with both embeddings fused.
fn reduced_config(seed: u64) -> ModelConfig {
    ModelConfig {
        dim_psi: 5,
        dim_rho: 12,
        dim_xi: 8,
        dim_ca: 3,
        dim_cv: 3,
        hidden_units: 7,
        num_classes: 3,
        embedding_mode: EmbeddingMode::Both,
        seed,
        ..ModelConfig::default()
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    check_config(&reduced_config(0), 4, 1e-6, 1e-5, 0);
}

#[test]
fn gradients_hold_across_seeds() {
    for seed in 1..6 {
        check_config(&reduced_config(seed), 4, 1e-6, 1e-5, seed);
    }
}

#[test]
fn gradients_hold_without_embeddings() {
    let config = ModelConfig {
        dim_psi: 4,
        hidden_units: 5,
        num_classes: 3,
        embedding_mode: EmbeddingMode::None,
        seed: 7,
        ..ModelConfig::default()
    };
    check_config(&config, 5, 1e-6, 1e-5, 7);
}

#[test]
fn gradients_hold_for_single_embedding_modes() {
    for (seed, mode) in [(8, EmbeddingMode::AffectOnly), (9, EmbeddingMode::IdentityOnly)] {
        let config = ModelConfig {
            dim_psi: 3,
            dim_rho: 6,
            dim_xi: 5,
            dim_ca: 2,
            dim_cv: 2,
            hidden_units: 4,
            num_classes: 3,
            embedding_mode: mode,
            seed,
            ..ModelConfig::default()
        };
        check_config(&config, 3, 1e-6, 1e-5, seed);
    }
}

#[test]
fn gradients_hold_with_mean_pooling_and_tanh_compression() {
    let config = ModelConfig {
        dim_psi: 3,
        dim_rho: 6,
        dim_xi: 5,
        dim_ca: 2,
        dim_cv: 2,
        hidden_units: 4,
        num_classes: 3,
        embedding_mode: EmbeddingMode::Both,
        compress_tanh: true,
        pooling: Pooling::Mean,
        seed: 10,
        ..ModelConfig::default()
    };
    check_config(&config, 4, 1e-6, 1e-5, 10);
}

#[test]
fn single_frame_gradients_match() {
    check_config(&reduced_config(11), 1, 1e-6, 1e-5, 11);
}
