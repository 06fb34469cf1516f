//! Behavior of trained models as the synthetic signal strength varies:
//! no signal means chance-level scores, and the score is non-decreasing
//! in the signal strength (seed-averaged).

use atlbp_core::model::{EmbeddingMode, ModelConfig};
use atlbp_core::pipeline::{plan_for, run_fold, ProtocolMode, ProtocolOptions};
use atlbp_core::synth::{generate, SyntheticSpec};

fn spec_with(alpha: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_users: 10,
        two_session_fraction: 0.0,
        problems_per_session: (10, 12),
        frames_per_problem: (10, 16),
        fps: 3.0,
        label_weights: [1.0 / 7.0; 7],
        signal_strength: alpha,
        baseline_scale: 0.0,
        noise_scale: 0.25,
        dim_psi: 8,
        dim_rho: 16,
        dim_xi: 12,
        seed,
        ..SyntheticSpec::default()
    }
}

fn config_with(seed: u64) -> ModelConfig {
    ModelConfig {
        dim_psi: 8,
        dim_rho: 16,
        dim_xi: 12,
        dim_ca: 6,
        dim_cv: 4,
        hidden_units: 16,
        num_classes: 7,
        learning_rate: 1e-3,
        epochs: 6,
        embedding_mode: EmbeddingMode::Both,
        seed,
        ..ModelConfig::default()
    }
}

fn fold0_mean_f(alpha: f64, seed: u64) -> f64 {
    let (_, segments) = generate(&spec_with(alpha, seed)).unwrap();
    let config = config_with(seed);
    let opts = ProtocolOptions {
        mode: ProtocolMode::Random,
        k: 5,
        target_fps: 3.0,
        ..ProtocolOptions::default()
    };
    let plan = plan_for(&segments, &opts, seed).unwrap();
    run_fold(&config, &segments, &plan, 0, &opts)
        .unwrap()
        .report
        .mean_f
}

#[test]
fn null_signal_scores_near_chance() {
    // With alpha = beta = 0 the features are pure noise; the trained
    // model cannot beat chance by much.
    let scores: Vec<f64> = (0..3).map(|s| fold0_mean_f(0.0, 500 + s)).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!(mean < 0.35, "null-signal mean F {mean:.4} ({scores:?})");
}

#[test]
fn mean_f_is_non_decreasing_in_signal_strength() {
    // Seed-averaged over 5 seeds at alpha in {0, small, large}.
    let mut means = Vec::new();
    for &alpha in &[0.0, 0.5, 2.0] {
        let scores: Vec<f64> = (0..5).map(|s| fold0_mean_f(alpha, 600 + s)).collect();
        means.push(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    println!("mean F by alpha: {means:?}");
    assert!(
        means[1] >= means[0] - 1e-9 && means[2] >= means[1] - 1e-9,
        "mean F must not decrease in alpha: {means:?}"
    );
    // The strong-signal end is far above chance.
    assert!(means[2] > 0.8, "large-alpha mean F {:.4}", means[2]);
}
