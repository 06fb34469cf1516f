//! Property tests for the numeric core, the split planners, the metrics,
//! and the dataset round trip.

use atlbp_core::data::{
    downsample, leave_users_out, personalization_split, random_kfold, write_dataset,
    DatasetHeader, FrameFeatures, OutcomeLabel, Segment,
};
use atlbp_core::metrics::{accuracy, confusion_matrix, mean_f_score, ConfusionMatrix};
use atlbp_core::numgrad::{softmax, AdamConfig, AdamState, Vec64};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn segment(user: usize, session: usize, problem: u32, n_frames: usize, fps: f64) -> Segment {
    let frames = (0..n_frames.max(1))
        .map(|i| FrameFeatures {
            psi: Vec64::new(vec![i as f64, user as f64]).unwrap(),
            rho: None,
            xi: None,
        })
        .collect();
    Segment {
        user_id: format!("u{user}"),
        session_id: format!("u{user}-s{session}"),
        problem_index: problem,
        label: OutcomeLabel::from_code((problem as usize) % 7).unwrap(),
        fps,
        frames,
    }
}

fn corpus(n_users: usize, per_user: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    for u in 0..n_users {
        for p in 0..per_user {
            out.push(segment(u, 0, p as u32, 3, 30.0));
        }
    }
    out
}

proptest! {
    #[test]
    fn softmax_outputs_lie_on_the_simplex(
        values in proptest::collection::vec(-700.0f64..700.0, 1..40)
    ) {
        let p = softmax(&Vec64::new(values).unwrap()).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn softmax_is_deterministic(
        values in proptest::collection::vec(-50.0f64..50.0, 1..20)
    ) {
        let a = softmax(&Vec64::new(values.clone()).unwrap()).unwrap();
        let b = softmax(&Vec64::new(values).unwrap()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn adam_with_zero_gradients_is_the_identity(
        values in proptest::collection::vec(-10.0f64..10.0, 1..30),
        steps in 1usize..10
    ) {
        let mut theta = values.clone();
        let mut state = AdamState::new(AdamConfig::new(0.05), &[theta.len()]);
        let zeros = vec![0.0; theta.len()];
        for _ in 0..steps {
            state.step(&mut [theta.as_mut_slice()], &[zeros.as_slice()]).unwrap();
        }
        prop_assert_eq!(theta, values);
    }

    #[test]
    fn random_kfold_partitions_for_any_seed(
        n in 10usize..60,
        k in 2usize..6,
        seed in any::<u64>()
    ) {
        prop_assume!(n >= k);
        let segments = corpus(1, n);
        let plan = random_kfold(&segments, k, seed).unwrap();
        plan.validate(&segments).unwrap();
        for fold in &plan.folds {
            let share = fold.test.len() as f64 / n as f64;
            prop_assert!((share - 1.0 / k as f64).abs() <= 1.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn leave_users_out_never_leaks_users(
        users in 4usize..12,
        per_user in 1usize..6,
        k in 2usize..5,
        seed in any::<u64>()
    ) {
        prop_assume!(users >= k);
        let segments = corpus(users, per_user);
        let plan = leave_users_out(&segments, k, seed).unwrap();
        plan.validate(&segments).unwrap();
        for fold in &plan.folds {
            let train: BTreeSet<&str> = fold.train.iter().map(|id| id.user_id.as_str()).collect();
            let test: BTreeSet<&str> = fold.test.iter().map(|id| id.user_id.as_str()).collect();
            prop_assert!(train.is_disjoint(&test));
        }
    }

    #[test]
    fn personalization_split_is_sound_for_any_fraction(
        users in 4usize..9,
        per_user in 1usize..8,
        fraction in 0.05f64..0.95,
        seed in any::<u64>()
    ) {
        let segments = corpus(users, per_user);
        let plan = leave_users_out(&segments, 4.min(users), seed).unwrap();
        let pers = personalization_split(&plan, fraction).unwrap();
        pers.validate(&segments).unwrap();
        for fold in &pers.folds {
            for ids in fold.personalize.values() {
                let expected = (fraction * per_user as f64).ceil() as usize;
                prop_assert_eq!(ids.len(), expected.min(per_user));
                // Earliest problems only.
                let max_teach = ids.iter().map(|id| id.problem_index).max().unwrap();
                prop_assert!(max_teach < expected as u32);
            }
        }
    }

    #[test]
    fn downsample_preserves_order_and_first_frame(
        n_frames in 1usize..120,
        target in 1u32..30
    ) {
        let seg = segment(0, 0, 0, n_frames, 30.0);
        let out = downsample(&seg, target as f64).unwrap();
        prop_assert!(!out.frames.is_empty());
        prop_assert!(out.frames.len() <= seg.frames.len());
        prop_assert_eq!(&out.frames[0], &seg.frames[0]);
        // Kept frames appear in their original relative order.
        let positions: Vec<f64> = out.frames.iter().map(|f| f.psi[0]).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]) || positions.len() == 1);
    }

    #[test]
    fn mean_f_is_invariant_under_class_permutation(
        rows in proptest::collection::vec(proptest::collection::vec(0u64..40, 5), 5),
        swap in (0usize..5, 0usize..5)
    ) {
        let cm = ConfusionMatrix::from_counts(&rows).unwrap();
        let base = mean_f_score(&cm).mean;

        let (a, b) = swap;
        let perm: Vec<usize> = (0..5).map(|i| if i == a { b } else if i == b { a } else { i }).collect();
        let permuted: Vec<Vec<u64>> = (0..5)
            .map(|i| (0..5).map(|j| rows[perm[i]][perm[j]]).collect())
            .collect();
        let pcm = ConfusionMatrix::from_counts(&permuted).unwrap();
        prop_assert!((mean_f_score(&pcm).mean - base).abs() < 1e-12);
    }

    #[test]
    fn f_scores_match_a_brute_force_recount(
        truths in proptest::collection::vec(0usize..6, 1..200),
        preds_seed in any::<u64>()
    ) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(preds_seed);
        let preds: Vec<usize> = truths.iter().map(|_| rng.gen_range(0..6)).collect();
        let cm = confusion_matrix(&truths, &preds, 6).unwrap();
        let scores = mean_f_score(&cm);
        let acc = accuracy(&cm).unwrap();

        // Independent definitional recount straight from the label lists.
        let mut f_sum = 0.0;
        let mut f_count = 0;
        for class in 0..6 {
            let tp = truths.iter().zip(&preds).filter(|(t, p)| **t == class && **p == class).count() as f64;
            let support = truths.iter().filter(|t| **t == class).count() as f64;
            let predicted = preds.iter().filter(|p| **p == class).count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if support > 0.0 { tp / support } else { 0.0 };
            let f = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            prop_assert!((scores.per_class[class] - f).abs() < 1e-12);
            if support > 0.0 || predicted > 0.0 {
                f_sum += f;
                f_count += 1;
            }
        }
        let expect_mean = if f_count > 0 { f_sum / f_count as f64 } else { 0.0 };
        prop_assert!((scores.mean - expect_mean).abs() < 1e-12);

        let correct = truths.iter().zip(&preds).filter(|(t, p)| t == p).count() as f64;
        prop_assert!((acc - correct / truths.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn dataset_round_trip_preserves_exact_bits(
        raw in proptest::collection::vec(any::<u64>(), 2..24)
    ) {
        // Reinterpret arbitrary bit patterns as doubles, keeping finite ones.
        let values: Vec<f64> = raw
            .iter()
            .map(|&bits| {
                let v = f64::from_bits(bits);
                if v.is_finite() { v } else { (bits % 1000) as f64 * 1e-15 }
            })
            .collect();
        let dim = values.len();
        let frames = vec![FrameFeatures {
            psi: Vec64::new(values.clone()).unwrap(),
            rho: None,
            xi: None,
        }];
        let seg = Segment {
            user_id: "u".into(),
            session_id: "s".into(),
            problem_index: 0,
            label: OutcomeLabel::GUESS,
            fps: 30.0,
            frames,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.jsonl");
        write_dataset(&path, &DatasetHeader::new(dim, 0, 0), &[seg]).unwrap();
        let loaded = atlbp_core::data::load_dataset(&path).unwrap();
        let got = loaded.segments[0].frames[0].psi.as_slice();
        for (a, b) in values.iter().zip(got.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
