//! Protocol runners: build a split plan, prepare each fold (downsample,
//! normalize with train-only statistics), train, optionally personalize
//! per test user, evaluate, and aggregate across folds.
//!
//! Folds may run in parallel; results are collected in fold order so
//! reports are independent of scheduling.

use crate::data::{
    downsample, leave_users_out, personalization_split, random_kfold, Normalizer, OutcomeLabel,
    Segment, SegmentId, SplitPlan,
};
use crate::error::{Error, Result};
use crate::metrics::{predominant_label_baseline, ConfusionMatrix, EvalReport};
use crate::model::{personalize, predict, train, ModelConfig, ModelParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Evaluation protocol selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolMode {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "leave-users-out")]
    LeaveUsersOut,
    #[serde(rename = "leave-users-out-personalized")]
    LeaveUsersOutPersonalized,
}

impl std::str::FromStr for ProtocolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ProtocolMode::Random),
            "leave-users-out" => Ok(ProtocolMode::LeaveUsersOut),
            "leave-users-out-personalized" => Ok(ProtocolMode::LeaveUsersOutPersonalized),
            other => Err(Error::Usage(format!(
                "unknown mode '{other}', expected random|leave-users-out|leave-users-out-personalized"
            ))),
        }
    }
}

/// Protocol settings shared by the split planners and the fold runner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub mode: ProtocolMode,
    pub k: usize,
    /// Share of each test user's session reserved for fine-tuning
    /// (personalized mode only).
    pub fraction: f64,
    /// Frame rate every segment is downsampled to before training.
    pub target_fps: f64,
    /// Cap on concurrently running folds; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            mode: ProtocolMode::Random,
            k: 5,
            fraction: 0.2,
            target_fps: 3.0,
            threads: None,
        }
    }
}

/// Reads the thread cap from the ATLBP_THREADS environment variable.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("ATLBP_THREADS") {
        Err(_) => Ok(None),
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                Error::Usage(format!("ATLBP_THREADS must be a positive integer, got '{raw}'"))
            })?;
            if n == 0 {
                return Err(Error::Usage("ATLBP_THREADS must be positive".into()));
            }
            Ok(Some(n))
        }
    }
}

/// Builds the split plan for the requested protocol.
pub fn plan_for(segments: &[Segment], opts: &ProtocolOptions, seed: u64) -> Result<SplitPlan> {
    match opts.mode {
        ProtocolMode::Random => random_kfold(segments, opts.k, seed),
        ProtocolMode::LeaveUsersOut => leave_users_out(segments, opts.k, seed),
        ProtocolMode::LeaveUsersOutPersonalized => {
            let base = leave_users_out(segments, opts.k, seed)?;
            personalization_split(&base, opts.fraction)
        }
    }
}

/// One fold's segments after downsampling and normalization, ready for
/// training and evaluation.
pub struct PreparedFold {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    pub personalize: BTreeMap<String, Vec<Segment>>,
    pub normalizer: Normalizer,
}

fn index_segments(segments: &[Segment]) -> BTreeMap<SegmentId, &Segment> {
    segments.iter().map(|s| (s.id(), s)).collect()
}

fn resolve<'a>(
    ids: &[SegmentId],
    index: &BTreeMap<SegmentId, &'a Segment>,
) -> Result<Vec<&'a Segment>> {
    ids.iter()
        .map(|id| {
            index.get(id).copied().ok_or_else(|| {
                Error::Data(format!("split plan references unknown segment {id}"))
            })
        })
        .collect()
}

/// Downsamples every role's segments, fits the normalizer on the training
/// role only, and applies it everywhere.
pub fn prepare_fold(
    segments: &[Segment],
    plan: &SplitPlan,
    fold_index: usize,
    target_fps: f64,
) -> Result<PreparedFold> {
    let fold = plan.folds.get(fold_index).ok_or_else(|| {
        Error::Usage(format!(
            "fold {fold_index} out of range for a plan with {} folds",
            plan.folds.len()
        ))
    })?;
    let index = index_segments(segments);
    let prep = |ids: &[SegmentId]| -> Result<Vec<Segment>> {
        resolve(ids, &index)?
            .into_iter()
            .map(|s| downsample(s, target_fps))
            .collect()
    };
    let train = prep(&fold.train)?;
    let test = prep(&fold.test)?;
    let mut personalize = BTreeMap::new();
    for (user, ids) in &fold.personalize {
        personalize.insert(user.clone(), prep(ids)?);
    }
    let normalizer = Normalizer::fit(&train)?;
    let apply_all = |segs: Vec<Segment>| -> Result<Vec<Segment>> {
        segs.iter().map(|s| normalizer.apply(s)).collect()
    };
    Ok(PreparedFold {
        train: apply_all(train)?,
        test: apply_all(test)?,
        personalize: personalize
            .into_iter()
            .map(|(u, segs)| Ok((u, segs.iter().map(|s| normalizer.apply(s)).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<BTreeMap<_, _>>>()?,
        normalizer,
    })
}

pub fn class_names(num_classes: usize) -> Vec<String> {
    if num_classes == OutcomeLabel::COUNT {
        OutcomeLabel::ALL.iter().map(|l| l.name().to_string()).collect()
    } else {
        (0..num_classes).map(|c| format!("class_{c}")).collect()
    }
}

/// Predicts every segment with the given parameters and assembles the
/// evaluation report.
pub fn evaluate(params: &ModelParams, segments: &[Segment]) -> Result<EvalReport> {
    let mut truths = Vec::with_capacity(segments.len());
    let mut preds = Vec::with_capacity(segments.len());
    let mut users = Vec::with_capacity(segments.len());
    for seg in segments {
        let (label, _) = predict(params, seg)?;
        truths.push(seg.label.code());
        preds.push(label);
        users.push(seg.user_id.clone());
    }
    EvalReport::from_predictions(
        &truths,
        &preds,
        &users,
        &class_names(params.config().num_classes),
    )
}

/// Per-fold outcome: trained parameters, evaluation, the constant-label
/// baseline on the same evaluation set, and the training loss trace.
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub params: ModelParams,
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub report: EvalReport,
    pub baseline_report: EvalReport,
    pub warnings: Vec<String>,
}

/// Seed used for fold `fold_index` when the run seed is `seed`.
pub fn fold_seed(seed: u64, fold_index: usize) -> u64 {
    seed.wrapping_add(fold_index as u64)
}

/// Trains and evaluates one fold of the plan. In personalized mode each
/// test user is evaluated with a copy of the fold model fine-tuned on that
/// user's personalization segments; the fold model itself is never
/// modified.
pub fn run_fold(
    config: &ModelConfig,
    segments: &[Segment],
    plan: &SplitPlan,
    fold_index: usize,
    opts: &ProtocolOptions,
) -> Result<FoldOutcome> {
    let prepared = prepare_fold(segments, plan, fold_index, opts.target_fps)?;
    let mut fold_config = config.clone();
    fold_config.seed = fold_seed(config.seed, fold_index);
    let trained = train(&fold_config, &prepared.train)?;
    let mut warnings = Vec::new();

    let names = class_names(config.num_classes);
    let report = if opts.mode == ProtocolMode::LeaveUsersOutPersonalized {
        let mut by_user: BTreeMap<String, Vec<&Segment>> = BTreeMap::new();
        for seg in &prepared.test {
            by_user.entry(seg.user_id.clone()).or_default().push(seg);
        }
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        let mut users = Vec::new();
        for (user, test_segs) in &by_user {
            let fine_tune = prepared.personalize.get(user).cloned().unwrap_or_default();
            let tuned = personalize(&trained.params, &fold_config, &fine_tune)?;
            if let Some(w) = tuned.warning {
                warnings.push(format!("fold {fold_index} user {user}: {w}"));
            }
            for seg in test_segs {
                let (label, _) = predict(&tuned.params, seg)?;
                truths.push(seg.label.code());
                preds.push(label);
                users.push(seg.user_id.clone());
            }
        }
        for (user, segs) in &prepared.personalize {
            if !by_user.contains_key(user) && !segs.is_empty() {
                warnings.push(format!(
                    "fold {fold_index} user {user}: personalized but has no evaluation segments"
                ));
            }
        }
        EvalReport::from_predictions(&truths, &preds, &users, &names)?
    } else {
        evaluate(&trained.params, &prepared.test)?
    };

    let constant = predominant_label_baseline(
        &prepared.train.iter().map(|s| s.label).collect::<Vec<_>>(),
    )?;
    let truths: Vec<usize> = prepared.test.iter().map(|s| s.label.code()).collect();
    let baseline_preds = vec![constant.code(); truths.len()];
    let users: Vec<String> = prepared.test.iter().map(|s| s.user_id.clone()).collect();
    let baseline_report = EvalReport::from_predictions(&truths, &baseline_preds, &users, &names)?;

    Ok(FoldOutcome {
        fold: fold_index,
        seed: fold_config.seed,
        params: trained.params,
        epoch_losses: trained.epoch_losses,
        steps: trained.steps,
        report,
        baseline_report,
        warnings,
    })
}

/// Two aggregate views over the folds: the mean of per-fold metrics and
/// the metrics of the pooled confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_of_folds_mean_f: f64,
    pub mean_of_folds_accuracy: f64,
    pub pooled: EvalReport,
}

pub fn aggregate_reports(reports: &[EvalReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::Usage("cannot aggregate zero fold reports".into()));
    }
    let names = reports[0].class_names.clone();
    let mut pooled = ConfusionMatrix::zeros(names.len())?;
    let scored: Vec<&EvalReport> = reports.iter().filter(|r| r.n_samples > 0).collect();
    for report in reports {
        pooled.add(&report.confusion_matrix()?)?;
    }
    let n = scored.len().max(1) as f64;
    // Per-user stats carry over to the pooled view only when each user was
    // evaluated in exactly one fold (leave-users-out); under random splits
    // a user's segments span folds and the per-fold reports keep the detail.
    let mut per_user = BTreeMap::new();
    let mut duplicated = false;
    for report in reports {
        for (user, stats) in &report.per_user {
            if per_user.insert(user.clone(), stats.clone()).is_some() {
                duplicated = true;
            }
        }
    }
    if duplicated {
        per_user.clear();
    }
    Ok(Aggregate {
        mean_of_folds_mean_f: scored.iter().map(|r| r.mean_f).sum::<f64>() / n,
        mean_of_folds_accuracy: scored.iter().map(|r| r.accuracy).sum::<f64>() / n,
        pooled: EvalReport::from_confusion(pooled, &names, per_user),
    })
}

/// Full cross-validation outcome.
pub struct CrossvalOutcome {
    pub plan: SplitPlan,
    pub folds: Vec<FoldOutcome>,
    pub aggregate: Aggregate,
    pub baseline_aggregate: Aggregate,
}

/// Runs the complete protocol: plan, per-fold training and evaluation
/// (folds in parallel, capped by `opts.threads`), and aggregation.
pub fn crossval(
    config: &ModelConfig,
    segments: &[Segment],
    opts: &ProtocolOptions,
) -> Result<CrossvalOutcome> {
    let plan = plan_for(segments, opts, config.seed)?;
    let folds = run_folds(config, segments, &plan, opts)?;
    let aggregate = aggregate_reports(&folds.iter().map(|f| f.report.clone()).collect::<Vec<_>>())?;
    let baseline_aggregate =
        aggregate_reports(&folds.iter().map(|f| f.baseline_report.clone()).collect::<Vec<_>>())?;
    Ok(CrossvalOutcome {
        plan,
        folds,
        aggregate,
        baseline_aggregate,
    })
}

/// Runs every fold of an existing plan, in fold order.
pub fn run_folds(
    config: &ModelConfig,
    segments: &[Segment],
    plan: &SplitPlan,
    opts: &ProtocolOptions,
) -> Result<Vec<FoldOutcome>> {
    plan.validate(segments)?;
    let indices: Vec<usize> = (0..plan.folds.len()).collect();
    let run = |i: &usize| run_fold(config, segments, plan, *i, opts);
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Usage(format!("failed to build thread pool: {e}")))?;
            pool.install(|| indices.par_iter().map(run).collect())
        }
        None => indices.par_iter().map(run).collect(),
    }
}
