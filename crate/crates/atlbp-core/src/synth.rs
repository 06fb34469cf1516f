//! Deterministic synthetic session generator.
//!
//! Each user gets a fixed per-dimension baseline drawn from N(0, beta^2);
//! each outcome class gets a temporal signature over normalized time
//! (ramp up, ramp down, mid pulse, constant offset, oscillation, late
//! pulse, zero) written into a small signal subspace of psi and scaled by
//! alpha. Five of the signatures share the same time-mean, so mean-pooling
//! over frames provably loses their class information while a temporal
//! model does not; two classes differ only in constant level, so an unseen
//! user's baseline must be calibrated before they separate. Embeddings are
//! fixed random linear expansions of a low-dimensional latent carrying the
//! same class and user signals, giving the learned compressions something
//! to recover.

use crate::data::{
    load_dataset, write_dataset, Dataset, DatasetHeader, FrameFeatures, OutcomeLabel, Segment,
};
use crate::error::{Error, Result};
use crate::numgrad::Vec64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Dimensions of psi that carry the class signature.
pub const SIGNAL_DIMS: usize = 4;

/// Latent size behind the embedding expansions: class signal, two user
/// coordinates, two noise channels.
const LATENT_DIMS: usize = 5;

/// Generator parameters. Ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_users: usize,
    /// Fraction of users recording a second session.
    pub two_session_fraction: f64,
    pub problems_per_session: (usize, usize),
    pub frames_per_problem: (usize, usize),
    pub fps: f64,
    /// Probability of each outcome, indexed by label code.
    pub label_weights: [f64; OutcomeLabel::COUNT],
    /// Class-signature scale (alpha).
    pub signal_strength: f64,
    /// Per-user baseline scale (beta).
    pub baseline_scale: f64,
    pub noise_scale: f64,
    pub dim_psi: usize,
    /// 0 omits the affect embedding from the dataset.
    pub dim_rho: usize,
    /// 0 omits the identity embedding from the dataset.
    pub dim_xi: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 54,
            two_session_fraction: 14.0 / 54.0,
            problems_per_session: (35, 45),
            frames_per_problem: (60, 150),
            fps: 30.0,
            // Skewed toward SOF, echoing the predominance of
            // solved-on-first-attempt outcomes in real tutor sessions.
            label_weights: [0.08, 0.04, 0.06, 0.05, 0.12, 0.09, 0.56],
            signal_strength: 1.0,
            baseline_scale: 1.0,
            noise_scale: 0.25,
            dim_psi: 49,
            dim_rho: 256,
            dim_xi: 128,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if self.dim_psi < SIGNAL_DIMS {
            return Err(Error::Config(format!(
                "dim_psi {} is below the signal subspace size {SIGNAL_DIMS}",
                self.dim_psi
            )));
        }
        if !(0.0..=1.0).contains(&self.two_session_fraction) {
            return Err(Error::Config(format!(
                "two_session_fraction must lie in [0, 1], got {}",
                self.two_session_fraction
            )));
        }
        for (name, (lo, hi)) in [
            ("problems_per_session", self.problems_per_session),
            ("frames_per_problem", self.frames_per_problem),
        ] {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("{name} range ({lo}, {hi}) is invalid")));
            }
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.label_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("label weights must be nonnegative".into()));
        }
        let sum: f64 = self.label_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-3 {
            return Err(Error::Config(format!(
                "label weights must sum to 1, got {sum}"
            )));
        }
        for (name, v) in [
            ("signal_strength", self.signal_strength),
            ("baseline_scale", self.baseline_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Temporal signature of a class over normalized time in [0, 1].
///
/// ATT ramps up, GIVEUP ramps down, GUESS pulses mid-segment, NOTR sits at
/// a constant offset, SHINT oscillates, SKIP pulses late, SOF is zero.
/// ATT, GIVEUP, GUESS, SHINT, and SKIP all share a time-mean of 1, so they
/// differ in shape only; NOTR and SOF differ in level only.
pub fn class_signature(label: OutcomeLabel, tau: f64) -> f64 {
    match label {
        OutcomeLabel::ATT => 2.0 * tau,
        OutcomeLabel::GIVEUP => 2.0 * (1.0 - tau),
        OutcomeLabel::GUESS => {
            if (1.0 / 3.0..2.0 / 3.0).contains(&tau) {
                3.0
            } else {
                0.0
            }
        }
        OutcomeLabel::NOTR => 2.0,
        OutcomeLabel::SHINT => 1.0 + (4.0 * std::f64::consts::PI * tau).sin(),
        OutcomeLabel::SKIP => {
            if tau >= 2.0 / 3.0 {
                3.0
            } else {
                0.0
            }
        }
        OutcomeLabel::SOF => 0.0,
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn sample_label(rng: &mut ChaCha8Rng, weights: &[f64; OutcomeLabel::COUNT]) -> OutcomeLabel {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen_range(0.0..total);
    for (code, &w) in weights.iter().enumerate() {
        if x < w {
            return OutcomeLabel::from_code(code).expect("code in range");
        }
        x -= w;
    }
    OutcomeLabel::SOF
}

/// Row-major expansion matrix [out_dim x LATENT_DIMS] shared by all users.
fn expansion_matrix(rng: &mut ChaCha8Rng, out_dim: usize) -> Vec<f64> {
    let scale = 1.0 / (LATENT_DIMS as f64).sqrt();
    (0..out_dim * LATENT_DIMS).map(|_| standard_normal(rng) * scale).collect()
}

fn expand(matrix: &[f64], out_dim: usize, latent: &[f64; LATENT_DIMS]) -> Vec<f64> {
    (0..out_dim)
        .map(|r| {
            let row = &matrix[r * LATENT_DIMS..(r + 1) * LATENT_DIMS];
            row.iter().zip(latent.iter()).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Generates the dataset in memory. Deterministic: the same spec always
/// produces the same segments.
pub fn generate(spec: &SyntheticSpec) -> Result<(DatasetHeader, Vec<Segment>)> {
    spec.validate()?;
    let header = DatasetHeader::new(spec.dim_psi, spec.dim_rho, spec.dim_xi);

    // Stream 0 carries shared state (expansion matrices); stream u + 1
    // drives user u, so users are independent of generation order.
    let mut shared_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    shared_rng.set_stream(0);
    let rho_matrix = (spec.dim_rho > 0).then(|| expansion_matrix(&mut shared_rng, spec.dim_rho));
    let xi_matrix = (spec.dim_xi > 0).then(|| expansion_matrix(&mut shared_rng, spec.dim_xi));

    let mut segments = Vec::new();
    for user_idx in 0..spec.n_users {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(user_idx as u64 + 1);
        let user_id = format!("u{user_idx:03}");

        let baseline: Vec<f64> = (0..spec.dim_psi)
            .map(|_| standard_normal(&mut rng) * spec.baseline_scale)
            .collect();
        // The first coordinate offsets the class-signal channel, so the
        // embeddings are baseline-confounded the same way psi is.
        let user_latent = [
            standard_normal(&mut rng) * spec.baseline_scale,
            standard_normal(&mut rng) * spec.baseline_scale,
            standard_normal(&mut rng) * spec.baseline_scale,
        ];

        let n_sessions = if rng.gen_range(0.0..1.0) < spec.two_session_fraction { 2 } else { 1 };
        for session_idx in 0..n_sessions {
            let session_id = format!("{user_id}-s{session_idx}");
            let n_problems = rng.gen_range(spec.problems_per_session.0..=spec.problems_per_session.1);
            for problem in 0..n_problems {
                let label = sample_label(&mut rng, &spec.label_weights);
                let n_frames = rng.gen_range(spec.frames_per_problem.0..=spec.frames_per_problem.1);
                let mut frames = Vec::with_capacity(n_frames);
                for t in 0..n_frames {
                    let tau = if n_frames > 1 {
                        t as f64 / (n_frames - 1) as f64
                    } else {
                        0.5
                    };
                    let signal = spec.signal_strength * class_signature(label, tau);
                    let psi: Vec<f64> = (0..spec.dim_psi)
                        .map(|d| {
                            let class_part = if d < SIGNAL_DIMS { signal } else { 0.0 };
                            baseline[d] + class_part + spec.noise_scale * standard_normal(&mut rng)
                        })
                        .collect();
                    let latent = [
                        signal + user_latent[0],
                        user_latent[1],
                        user_latent[2],
                        spec.noise_scale * standard_normal(&mut rng),
                        spec.noise_scale * standard_normal(&mut rng),
                    ];
                    let rho = rho_matrix
                        .as_ref()
                        .map(|m| Vec64::new(expand(m, spec.dim_rho, &latent)))
                        .transpose()?;
                    let xi = xi_matrix
                        .as_ref()
                        .map(|m| Vec64::new(expand(m, spec.dim_xi, &latent)))
                        .transpose()?;
                    frames.push(FrameFeatures {
                        psi: Vec64::new(psi)?,
                        rho,
                        xi,
                    });
                }
                segments.push(Segment {
                    user_id: user_id.clone(),
                    session_id: session_id.clone(),
                    problem_index: problem as u32,
                    label,
                    fps: spec.fps,
                    frames,
                });
            }
        }
    }
    Ok((header, segments))
}

/// Generates and writes the dataset in the ingestion format. The same spec
/// produces a byte-identical file.
pub fn generate_to_file(spec: &SyntheticSpec, path: impl AsRef<Path>) -> Result<()> {
    let (header, segments) = generate(spec)?;
    write_dataset(path, &header, &segments)
}

/// Summary statistics of a dataset: population counts, label histogram,
/// and frame-count statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub sessions: usize,
    pub segments: usize,
    pub label_histogram: BTreeMap<String, u64>,
    pub frames_total: u64,
    pub frames_min: u64,
    pub frames_max: u64,
    pub frames_mean: f64,
    pub dim_psi: usize,
    pub dim_rho: usize,
    pub dim_xi: usize,
}

pub fn describe(dataset: &Dataset) -> DatasetSummary {
    let mut users = std::collections::BTreeSet::new();
    let mut sessions = std::collections::BTreeSet::new();
    let mut histogram: BTreeMap<String, u64> = OutcomeLabel::ALL
        .iter()
        .map(|l| (l.name().to_string(), 0))
        .collect();
    let mut frames_total = 0u64;
    let mut frames_min = u64::MAX;
    let mut frames_max = 0u64;
    for seg in &dataset.segments {
        users.insert(&seg.user_id);
        sessions.insert((&seg.user_id, &seg.session_id));
        *histogram.get_mut(seg.label.name()).expect("all labels present") += 1;
        let n = seg.frames.len() as u64;
        frames_total += n;
        frames_min = frames_min.min(n);
        frames_max = frames_max.max(n);
    }
    let n_segments = dataset.segments.len();
    DatasetSummary {
        users: users.len(),
        sessions: sessions.len(),
        segments: n_segments,
        label_histogram: histogram,
        frames_total,
        frames_min: if n_segments == 0 { 0 } else { frames_min },
        frames_max,
        frames_mean: if n_segments == 0 {
            0.0
        } else {
            frames_total as f64 / n_segments as f64
        },
        dim_psi: dataset.header.dim_psi,
        dim_rho: dataset.header.dim_rho,
        dim_xi: dataset.header.dim_xi,
    }
}

/// Loads a dataset file and summarizes it.
pub fn describe_file(path: impl AsRef<Path>) -> Result<DatasetSummary> {
    Ok(describe(&load_dataset(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_users: 6,
            two_session_fraction: 0.3,
            problems_per_session: (3, 5),
            frames_per_problem: (4, 8),
            label_weights: [1.0 / 7.0; 7],
            dim_psi: 6,
            dim_rho: 10,
            dim_xi: 8,
            seed: 12,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        generate_to_file(&spec, &a).unwrap();
        generate_to_file(&spec, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let mut other = spec.clone();
        other.seed = 13;
        let c = dir.path().join("c.jsonl");
        generate_to_file(&other, &c).unwrap();
        assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    }

    #[test]
    fn generated_file_round_trips_to_identical_values() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let (header, segments) = generate(&spec).unwrap();
        write_dataset(&path, &header, &segments).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.header, header);
        assert_eq!(loaded.segments, segments);

        // Write the loaded copy again: values must survive a second pass.
        let path2 = dir.path().join("data2.jsonl");
        write_dataset(&path2, &loaded.header, &loaded.segments).unwrap();
        let reloaded = load_dataset(&path2).unwrap();
        assert_eq!(reloaded.segments, segments);
    }

    #[test]
    fn gzip_output_round_trips_and_is_deterministic() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl.gz");
        let b = dir.path().join("b.jsonl.gz");
        generate_to_file(&spec, &a).unwrap();
        generate_to_file(&spec, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let loaded = load_dataset(&a).unwrap();
        assert_eq!(loaded.segments, generate(&spec).unwrap().1);
    }

    #[test]
    fn shape_coded_signatures_share_their_time_mean() {
        // Numeric integration over [0, 1].
        let mean = |label: OutcomeLabel| -> f64 {
            let n = 100_000;
            (0..n).map(|i| class_signature(label, (i as f64 + 0.5) / n as f64)).sum::<f64>()
                / n as f64
        };
        use OutcomeLabel::*;
        for label in [ATT, GIVEUP, GUESS, SHINT, SKIP] {
            assert!((mean(label) - 1.0).abs() < 1e-3, "{label}: {}", mean(label));
        }
        assert!((mean(NOTR) - 2.0).abs() < 1e-9);
        assert_eq!(mean(SOF), 0.0);
    }

    #[test]
    fn null_signal_carries_no_class_information() {
        let mut spec = small_spec();
        spec.signal_strength = 0.0;
        spec.baseline_scale = 0.0;
        let (_, segments) = generate(&spec).unwrap();
        // psi is pure noise: per-class means of the signal dims coincide.
        let mut by_class: BTreeMap<usize, (f64, u64)> = BTreeMap::new();
        for seg in &segments {
            for frame in &seg.frames {
                let e = by_class.entry(seg.label.code()).or_default();
                e.0 += frame.psi[0];
                e.1 += 1;
            }
        }
        for (class, (sum, n)) in by_class {
            let mean = sum / n as f64;
            assert!(mean.abs() < 0.2, "class {class} mean {mean}");
        }
    }

    #[test]
    fn describe_counts_match_generated_population() {
        let spec = SyntheticSpec {
            n_users: 54,
            two_session_fraction: 14.0 / 54.0,
            problems_per_session: (35, 45),
            frames_per_problem: (3, 6),
            dim_psi: 6,
            dim_rho: 0,
            dim_xi: 0,
            seed: 4,
            ..SyntheticSpec::default()
        };
        let (header, segments) = generate(&spec).unwrap();
        let summary = describe(&Dataset { header, segments: segments.clone() });
        assert_eq!(summary.users, 54);
        assert_eq!(summary.segments, segments.len());
        assert!(
            (2400..=3100).contains(&summary.segments),
            "segment count {} far from the expected magnitude",
            summary.segments
        );
        let sessions: std::collections::BTreeSet<_> =
            segments.iter().map(|s| s.session_id.clone()).collect();
        assert_eq!(summary.sessions, sessions.len());
        let hist_sum: u64 = summary.label_histogram.values().sum();
        assert_eq!(hist_sum, summary.segments as u64);
    }

    #[test]
    fn empty_dataset_summarizes_to_zero_counts() {
        let ds = Dataset {
            header: DatasetHeader::new(4, 0, 0),
            segments: Vec::new(),
        };
        let summary = describe(&ds);
        assert_eq!(summary.users, 0);
        assert_eq!(summary.sessions, 0);
        assert_eq!(summary.segments, 0);
        assert_eq!(summary.frames_total, 0);
    }

    #[test]
    fn psi_below_signal_subspace_is_rejected() {
        let mut spec = small_spec();
        spec.dim_psi = SIGNAL_DIMS - 1;
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn label_weights_must_sum_to_one() {
        let mut spec = small_spec();
        spec.label_weights = [0.5; 7];
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }
}
