//! Split planners: random k-fold over segments, leave-users-out over users,
//! and the personalization split that carves each test user's earliest
//! problems out of the evaluation set.

use crate::data::{Segment, SegmentId};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "leave-users-out")]
    LeaveUsersOut,
}

/// One fold's role assignment. `personalize` maps each test user to the
/// segments reserved for fine-tuning; those segments are not in `test`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<SegmentId>,
    pub test: Vec<SegmentId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub personalize: BTreeMap<String, Vec<SegmentId>>,
}

impl Fold {
    /// All personalization segments of this fold, across users.
    pub fn personalize_ids(&self) -> Vec<SegmentId> {
        self.personalize.values().flatten().cloned().collect()
    }
}

/// Deterministic assignment of segment ids to train/test (and
/// personalization) roles across folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub format_version: u32,
    pub kind: SplitKind,
    pub k: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    pub folds: Vec<Fold>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn sorted_ids(segments: &[Segment]) -> Vec<SegmentId> {
    let mut ids: Vec<SegmentId> = segments.iter().map(|s| s.id()).collect();
    ids.sort();
    ids
}

/// Sizes of k near-equal chunks of n items; the first n % k chunks take the
/// extra item.
fn chunk_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(|i| base + usize::from(i < extra)).collect()
}

/// Random k-fold plan: a seeded shuffle of all segments, with fold i testing
/// the i-th contiguous chunk. Every segment lands in exactly one test fold.
pub fn random_kfold(segments: &[Segment], k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Usage(format!("k must be at least 2, got {k}")));
    }
    if segments.len() < k {
        return Err(Error::Usage(format!(
            "need at least {k} segments for {k}-fold splitting, got {}",
            segments.len()
        )));
    }
    let mut ids = sorted_ids(segments);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for size in chunk_sizes(ids.len(), k) {
        let test: Vec<SegmentId> = ids[start..start + size].to_vec();
        let train: Vec<SegmentId> = ids[..start]
            .iter()
            .chain(ids[start + size..].iter())
            .cloned()
            .collect();
        folds.push(Fold {
            train,
            test,
            personalize: BTreeMap::new(),
        });
        start += size;
    }
    Ok(SplitPlan {
        format_version: PLAN_FORMAT_VERSION,
        kind: SplitKind::Random,
        k,
        seed,
        fraction: None,
        folds,
        warnings: Vec::new(),
    })
}

/// Leave-users-out plan: users are shuffled and partitioned into k groups;
/// fold i tests every segment of group i's users, so no user ever appears on
/// both sides of a fold.
pub fn leave_users_out(segments: &[Segment], k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Usage(format!("k must be at least 2, got {k}")));
    }
    let mut users: Vec<String> = segments
        .iter()
        .map(|s| s.user_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if users.len() < k {
        return Err(Error::Usage(format!(
            "need at least {k} distinct users for {k} leave-users-out folds, got {}",
            users.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);

    let ids = sorted_ids(segments);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for size in chunk_sizes(users.len(), k) {
        let test_users: BTreeSet<&String> = users[start..start + size].iter().collect();
        let (test, train): (Vec<SegmentId>, Vec<SegmentId>) =
            ids.iter().cloned().partition(|id| test_users.contains(&id.user_id));
        folds.push(Fold {
            train,
            test,
            personalize: BTreeMap::new(),
        });
        start += size;
    }
    Ok(SplitPlan {
        format_version: PLAN_FORMAT_VERSION,
        kind: SplitKind::LeaveUsersOut,
        k,
        seed,
        fraction: None,
        folds,
        warnings: Vec::new(),
    })
}

/// Adds personalization sets to a leave-users-out plan: per test user and
/// session, the earliest ceil(fraction * n_problems) segments by problem
/// index move from the evaluation set into that user's personalize set.
pub fn personalization_split(plan: &SplitPlan, fraction: f64) -> Result<SplitPlan> {
    if plan.kind != SplitKind::LeaveUsersOut {
        return Err(Error::Usage(
            "personalization requires a leave-users-out plan".into(),
        ));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Usage(format!(
            "personalization fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut out = plan.clone();
    out.fraction = Some(fraction);
    for (fold_idx, fold) in out.folds.iter_mut().enumerate() {
        // Group the fold's test segments per (user, session).
        let mut sessions: BTreeMap<(String, String), Vec<SegmentId>> = BTreeMap::new();
        for id in &fold.test {
            sessions
                .entry((id.user_id.clone(), id.session_id.clone()))
                .or_default()
                .push(id.clone());
        }
        let mut personalize: BTreeMap<String, Vec<SegmentId>> = BTreeMap::new();
        let mut reserved: BTreeSet<SegmentId> = BTreeSet::new();
        for ((user, session), mut ids) in sessions {
            ids.sort_by_key(|id| id.problem_index);
            let n_take = (fraction * ids.len() as f64).ceil() as usize;
            if n_take >= ids.len() {
                out.warnings.push(format!(
                    "fold {fold_idx}: user {user} session {session} has {} problem(s); all {n_take} personalize, none evaluate",
                    ids.len()
                ));
            }
            for id in ids.into_iter().take(n_take) {
                reserved.insert(id.clone());
                personalize.entry(user.clone()).or_default().push(id);
            }
        }
        fold.test.retain(|id| !reserved.contains(id));
        fold.personalize = personalize;
    }
    Ok(out)
}

impl SplitPlan {
    /// Checks structural soundness against the segment population: per fold,
    /// train/test/personalize are pairwise disjoint and reconstruct the
    /// input exactly; across folds, test + personalize partition the input.
    pub fn validate(&self, segments: &[Segment]) -> Result<()> {
        let all: BTreeSet<SegmentId> = segments.iter().map(|s| s.id()).collect();
        if self.folds.len() != self.k {
            return Err(Error::Data(format!(
                "plan declares k={} but holds {} folds",
                self.k,
                self.folds.len()
            )));
        }
        let mut tested: BTreeMap<SegmentId, usize> = BTreeMap::new();
        for (i, fold) in self.folds.iter().enumerate() {
            let train: BTreeSet<SegmentId> = fold.train.iter().cloned().collect();
            let test: BTreeSet<SegmentId> = fold.test.iter().cloned().collect();
            let pers: BTreeSet<SegmentId> = fold.personalize_ids().into_iter().collect();
            if train.len() != fold.train.len() || test.len() != fold.test.len() {
                return Err(Error::Data(format!("fold {i} repeats a segment id")));
            }
            if !train.is_disjoint(&test) || !train.is_disjoint(&pers) || !test.is_disjoint(&pers) {
                return Err(Error::Data(format!(
                    "fold {i}: train/test/personalize sets overlap"
                )));
            }
            let union: BTreeSet<SegmentId> =
                train.iter().chain(test.iter()).chain(pers.iter()).cloned().collect();
            if union != all {
                return Err(Error::Data(format!(
                    "fold {i}: roles do not reconstruct the dataset ({} of {} ids)",
                    union.len(),
                    all.len()
                )));
            }
            if self.kind == SplitKind::LeaveUsersOut {
                let train_users: BTreeSet<&str> =
                    train.iter().map(|id| id.user_id.as_str()).collect();
                let held_out: BTreeSet<&str> = test
                    .iter()
                    .chain(pers.iter())
                    .map(|id| id.user_id.as_str())
                    .collect();
                if train_users.intersection(&held_out).next().is_some() {
                    return Err(Error::Data(format!(
                        "fold {i}: a user appears in both train and test"
                    )));
                }
            }
            for id in test.iter().chain(pers.iter()) {
                *tested.entry(id.clone()).or_insert(0) += 1;
            }
        }
        if tested.len() != all.len() || tested.values().any(|&c| c != 1) {
            return Err(Error::Data(
                "segments are not partitioned into exactly one test fold".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("failed to serialize split plan: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let plan: SplitPlan = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: 0,
            message: format!("invalid split plan: {e}"),
        })?;
        if plan.format_version != PLAN_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported plan format_version {}",
                plan.format_version
            )));
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests_support::make_segment;

    fn corpus(n_users: usize, per_user: usize) -> Vec<Segment> {
        let mut out = Vec::new();
        for u in 0..n_users {
            for p in 0..per_user {
                out.push(make_segment(&format!("u{u}"), "s1", p as u32, 3));
            }
        }
        out
    }

    #[test]
    fn kfold_100_segments_gives_80_20_shares() {
        let segs = corpus(10, 10);
        let plan = random_kfold(&segs, 5, 42).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.test.len(), 20);
            assert_eq!(fold.train.len(), 80);
        }
        plan.validate(&segs).unwrap();
    }

    #[test]
    fn kfold_test_folds_partition_segments() {
        let segs = corpus(7, 3);
        let plan = random_kfold(&segs, 5, 1).unwrap();
        let mut seen = BTreeSet::new();
        for fold in &plan.folds {
            for id in &fold.test {
                assert!(seen.insert(id.clone()), "segment tested twice: {id}");
            }
        }
        assert_eq!(seen.len(), segs.len());
    }

    #[test]
    fn kfold_is_deterministic_in_seed() {
        let segs = corpus(6, 4);
        assert_eq!(random_kfold(&segs, 3, 9).unwrap(), random_kfold(&segs, 3, 9).unwrap());
        assert_ne!(
            random_kfold(&segs, 3, 9).unwrap().folds[0].test,
            random_kfold(&segs, 3, 10).unwrap().folds[0].test
        );
    }

    #[test]
    fn kfold_rejects_too_few_segments() {
        let segs = corpus(1, 3);
        assert!(matches!(random_kfold(&segs, 5, 0), Err(Error::Usage(_))));
        assert!(matches!(random_kfold(&segs, 1, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn leave_users_out_tests_two_users_per_fold() {
        let segs = corpus(10, 5);
        let plan = leave_users_out(&segs, 5, 3).unwrap();
        for fold in &plan.folds {
            let users: BTreeSet<&str> = fold.test.iter().map(|id| id.user_id.as_str()).collect();
            assert_eq!(users.len(), 2);
            assert_eq!(fold.test.len(), 10);
        }
        plan.validate(&segs).unwrap();
    }

    #[test]
    fn leave_users_out_has_no_user_overlap() {
        let segs = corpus(9, 4);
        let plan = leave_users_out(&segs, 4, 17).unwrap();
        for fold in &plan.folds {
            let train_users: BTreeSet<&str> = fold.train.iter().map(|id| id.user_id.as_str()).collect();
            let test_users: BTreeSet<&str> = fold.test.iter().map(|id| id.user_id.as_str()).collect();
            assert!(train_users.is_disjoint(&test_users));
        }
    }

    #[test]
    fn leave_users_out_tests_every_user_once() {
        let segs = corpus(11, 2);
        let plan = leave_users_out(&segs, 5, 0).unwrap();
        let mut tested_users = Vec::new();
        for fold in &plan.folds {
            let users: BTreeSet<String> = fold.test.iter().map(|id| id.user_id.clone()).collect();
            tested_users.extend(users);
        }
        tested_users.sort();
        let mut expected: Vec<String> = (0..11).map(|u| format!("u{u}")).collect();
        expected.sort();
        assert_eq!(tested_users, expected);
    }

    #[test]
    fn leave_users_out_rejects_too_few_users() {
        let segs = corpus(3, 5);
        assert!(matches!(leave_users_out(&segs, 5, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn personalization_reserves_earliest_fifth() {
        let segs = corpus(5, 10);
        let plan = leave_users_out(&segs, 5, 2).unwrap();
        let pers = personalization_split(&plan, 0.2).unwrap();
        pers.validate(&segs).unwrap();
        for fold in &pers.folds {
            for (user, ids) in &fold.personalize {
                assert_eq!(ids.len(), 2, "user {user}: ceil(0.2 * 10) = 2");
                let indices: Vec<u32> = ids.iter().map(|id| id.problem_index).collect();
                assert_eq!(indices, vec![0, 1], "earliest problems personalize");
            }
            // 8 evaluation segments remain for the fold's single user.
            assert_eq!(fold.test.len(), 8);
        }
    }

    #[test]
    fn single_problem_session_personalizes_and_flags() {
        let segs = corpus(5, 1);
        let plan = leave_users_out(&segs, 5, 2).unwrap();
        let pers = personalization_split(&plan, 0.2).unwrap();
        for fold in &pers.folds {
            assert_eq!(fold.test.len(), 0);
            assert_eq!(fold.personalize_ids().len(), 1);
        }
        assert!(!pers.warnings.is_empty());
        pers.validate(&segs).unwrap();
    }

    #[test]
    fn personalization_requires_leave_users_out_plan_and_valid_fraction() {
        let segs = corpus(5, 4);
        let random = random_kfold(&segs, 5, 0).unwrap();
        assert!(matches!(personalization_split(&random, 0.2), Err(Error::Usage(_))));
        let luo = leave_users_out(&segs, 5, 0).unwrap();
        assert!(matches!(personalization_split(&luo, 0.0), Err(Error::Usage(_))));
        assert!(matches!(personalization_split(&luo, 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn plan_round_trips_through_json() {
        let segs = corpus(5, 4);
        let plan = personalization_split(&leave_users_out(&segs, 5, 7).unwrap(), 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        plan.save(&path).unwrap();
        let loaded = SplitPlan::load(&path).unwrap();
        assert_eq!(plan, loaded);
    }
}
