//! Subcommand implementations. Every run writes its resolved configuration
//! next to its outputs, and every JSON artifact carries the seed and the
//! configuration hash.

use crate::config::RunConfig;
use atlbp_core::data::{load_dataset, Dataset, DatasetHeader, SplitPlan};
use atlbp_core::metrics::EvalReport;
use atlbp_core::model::{personalize, train, ModelConfig, ModelParams};
use atlbp_core::pipeline::{
    self, crossval, evaluate, plan_for, prepare_fold, Aggregate,
};
use atlbp_core::synth::{describe_file, generate_to_file};
use atlbp_core::{Error, Result};
use serde::Serialize;
use std::path::Path;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// The resolved configuration is written as `run_config.txt` inside output
/// directories, or as `<file>.config.txt` next to single-file outputs.
fn write_config_near(cfg: &RunConfig, out: &Path, is_dir: bool) -> Result<()> {
    let path = if is_dir {
        out.join("run_config.txt")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".config.txt");
        out.with_file_name(name)
    };
    cfg.write_resolved(&path)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("failed to serialize {}: {e}", path.display())))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Model dimensions default to the dataset header's when not configured
/// explicitly.
fn model_config_for(cfg: &RunConfig, header: &DatasetHeader) -> Result<ModelConfig> {
    let mut adjusted = cfg.clone();
    if cfg.get("dim_psi").is_none() {
        adjusted.set("dim_psi", header.dim_psi);
    }
    if cfg.get("dim_rho").is_none() && header.dim_rho > 0 {
        adjusted.set("dim_rho", header.dim_rho);
    }
    if cfg.get("dim_xi").is_none() && header.dim_xi > 0 {
        adjusted.set("dim_xi", header.dim_xi);
    }
    let config = adjusted.model_config()?;
    check_compat(&config, header)?;
    Ok(config)
}

fn check_compat(config: &ModelConfig, header: &DatasetHeader) -> Result<()> {
    if config.dim_psi != header.dim_psi {
        return Err(Error::Config(format!(
            "model dim_psi {} does not match dataset dim_psi {}",
            config.dim_psi, header.dim_psi
        )));
    }
    if config.uses_affect() && config.dim_rho != header.dim_rho {
        return Err(Error::Config(format!(
            "model dim_rho {} does not match dataset dim_rho {} (use embedding_mode to drop it)",
            config.dim_rho, header.dim_rho
        )));
    }
    if config.uses_identity() && config.dim_xi != header.dim_xi {
        return Err(Error::Config(format!(
            "model dim_xi {} does not match dataset dim_xi {}",
            config.dim_xi, header.dim_xi
        )));
    }
    Ok(())
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = cfg.synthetic_spec()?;
    generate_to_file(&spec, out)?;
    write_config_near(cfg, out, false)?;
    let summary = describe_file(out)?;
    println!(
        "wrote {} ({} users, {} sessions, {} segments, config {})",
        out.display(),
        summary.users,
        summary.sessions,
        summary.segments,
        cfg.hash()
    );
    Ok(())
}

pub fn cmd_describe(manifest: &Path, out: Option<&Path>) -> Result<()> {
    let summary = describe_file(manifest)?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Data(format!("failed to serialize summary: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// The plan itself already records its seed; the wrapper adds the
/// configuration hash of the run that produced it.
#[derive(Serialize)]
struct PlanDoc<'a> {
    config_hash: String,
    #[serde(flatten)]
    plan: &'a SplitPlan,
}

pub fn cmd_split(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let opts = cfg.protocol_options()?;
    let seed = seed_of(cfg)?;
    let dataset = load_dataset(manifest)?;
    let plan = plan_for(&dataset.segments, &opts, seed)?;
    plan.validate(&dataset.segments)?;
    write_json(
        out,
        &PlanDoc {
            config_hash: cfg.hash(),
            plan: &plan,
        },
    )?;
    write_config_near(cfg, out, false)?;
    println!(
        "wrote {} ({:?}, k={}, seed={}, config {})",
        out.display(),
        opts.mode,
        opts.k,
        seed,
        cfg.hash()
    );
    Ok(())
}

fn seed_of(cfg: &RunConfig) -> Result<u64> {
    Ok(cfg
        .get("seed")
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| Error::Usage(format!("seed '{s}' is not an integer")))
        })
        .transpose()?
        .unwrap_or(0))
}

fn load_plan(path: &Path, dataset: &Dataset) -> Result<SplitPlan> {
    let plan = SplitPlan::load(path)?;
    plan.validate(&dataset.segments)?;
    Ok(plan)
}

#[derive(Serialize)]
struct TrainDoc {
    format_version: u32,
    plan: String,
    fold: usize,
    seed: u64,
    config_hash: String,
    steps: u64,
    epoch_losses: Vec<f64>,
}

pub fn cmd_train(cfg: &RunConfig, manifest: &Path, plan_path: &Path, fold: usize, out: &Path) -> Result<()> {
    let opts = cfg.protocol_options()?;
    let dataset = load_dataset(manifest)?;
    let plan = load_plan(plan_path, &dataset)?;
    let mut config = model_config_for(cfg, &dataset.header)?;
    config.seed = pipeline::fold_seed(config.seed, fold);

    let prepared = prepare_fold(&dataset.segments, &plan, fold, opts.target_fps)?;
    let result = train(&config, &prepared.train)?;

    ensure_dir(out)?;
    result.params.save(out.join("checkpoint.json"))?;
    write_json(
        &out.join("train_report.json"),
        &TrainDoc {
            format_version: REPORT_FORMAT_VERSION,
            plan: plan_path.display().to_string(),
            fold,
            seed: config.seed,
            config_hash: cfg.hash(),
            steps: result.steps,
            epoch_losses: result.epoch_losses,
        },
    )?;
    write_config_near(cfg, out, true)?;
    println!(
        "trained fold {fold}: {} steps, checkpoint at {} (config {})",
        result.steps,
        out.join("checkpoint.json").display(),
        cfg.hash()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalDoc {
    format_version: u32,
    plan: String,
    fold: usize,
    seed: u64,
    config_hash: String,
    report: EvalReport,
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    plan_path: &Path,
    fold: usize,
    out: &Path,
) -> Result<()> {
    let opts = cfg.protocol_options()?;
    let dataset = load_dataset(manifest)?;
    let plan = load_plan(plan_path, &dataset)?;
    let params = ModelParams::load(checkpoint)?;
    check_compat(params.config(), &dataset.header)?;

    let prepared = prepare_fold(&dataset.segments, &plan, fold, opts.target_fps)?;
    let report = evaluate(&params, &prepared.test)?;

    ensure_dir(out)?;
    write_json(
        &out.join("eval_report.json"),
        &EvalDoc {
            format_version: REPORT_FORMAT_VERSION,
            plan: plan_path.display().to_string(),
            fold,
            seed: params.config().seed,
            config_hash: cfg.hash(),
            report: report.clone(),
        },
    )?;
    write_config_near(cfg, out, true)?;
    println!(
        "evaluated fold {fold}: mean F = {:.4}, accuracy = {:.4} over {} segments (config {})",
        report.mean_f,
        report.accuracy,
        report.n_samples,
        cfg.hash()
    );
    Ok(())
}

#[derive(Serialize)]
struct PersonalizeDoc {
    format_version: u32,
    plan: String,
    fold: usize,
    user: String,
    seed: u64,
    config_hash: String,
    fine_tune_segments: usize,
    epoch_losses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn safe_file_component(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Fine-tuning keeps the checkpoint's architecture but honors optimizer
/// settings given explicitly in the run configuration.
fn fine_tune_config(base: &ModelConfig, cfg: &RunConfig) -> Result<ModelConfig> {
    let mut out = base.clone();
    let overrides = cfg.model_config_overlay(base)?;
    out.learning_rate = overrides.learning_rate;
    out.epochs = overrides.epochs;
    out.beta1 = overrides.beta1;
    out.beta2 = overrides.beta2;
    out.epsilon = overrides.epsilon;
    out.seed = overrides.seed;
    out.grad_clip = overrides.grad_clip;
    out.validate()?;
    Ok(out)
}

pub fn cmd_personalize(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    plan_path: &Path,
    fold: usize,
    user: &str,
    out: &Path,
) -> Result<()> {
    let opts = cfg.protocol_options()?;
    let dataset = load_dataset(manifest)?;
    let plan = load_plan(plan_path, &dataset)?;
    let base = ModelParams::load(checkpoint)?;
    check_compat(base.config(), &dataset.header)?;

    let prepared = prepare_fold(&dataset.segments, &plan, fold, opts.target_fps)?;
    let fine_tune = prepared.personalize.get(user).cloned().unwrap_or_default();
    if fine_tune.is_empty() && !plan.folds[fold].personalize.contains_key(user) {
        let known: Vec<&String> = plan.folds[fold].personalize.keys().collect();
        return Err(Error::Usage(format!(
            "user '{user}' has no personalization set in fold {fold} (users: {known:?})"
        )));
    }
    let ft_config = fine_tune_config(base.config(), cfg)?;
    let result = personalize(&base, &ft_config, &fine_tune)?;

    ensure_dir(out)?;
    let file = out.join(format!("user_{}.checkpoint.json", safe_file_component(user)));
    result.params.save(&file)?;
    write_json(
        &out.join(format!("user_{}.report.json", safe_file_component(user))),
        &PersonalizeDoc {
            format_version: REPORT_FORMAT_VERSION,
            plan: plan_path.display().to_string(),
            fold,
            user: user.to_string(),
            seed: base.config().seed,
            config_hash: cfg.hash(),
            fine_tune_segments: fine_tune.len(),
            epoch_losses: result.epoch_losses,
            warning: result.warning.clone(),
        },
    )?;
    write_config_near(cfg, out, true)?;
    match result.warning {
        Some(w) => println!("personalized {user}: {w}"),
        None => println!(
            "personalized {user} on {} segments, checkpoint at {}",
            fine_tune.len(),
            file.display()
        ),
    }
    Ok(())
}

#[derive(Serialize)]
struct FoldDoc {
    fold: usize,
    seed: u64,
    steps: u64,
    epoch_losses: Vec<f64>,
    report: EvalReport,
    baseline_report: EvalReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct CrossvalDoc {
    format_version: u32,
    /// Plan artifact written alongside this report.
    plan_file: String,
    protocol: atlbp_core::pipeline::ProtocolMode,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fraction: Option<f64>,
    target_fps: f64,
    seed: u64,
    config_hash: String,
    model_config: ModelConfig,
    folds: Vec<FoldDoc>,
    /// Mean of per-fold metrics and pooled-confusion metrics for the model.
    aggregate: Aggregate,
    /// The same two views for the predominant-label baseline.
    baseline_aggregate: Aggregate,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    plan_warnings: Vec<String>,
}

pub fn cmd_crossval(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let opts = cfg.protocol_options()?;
    let dataset = load_dataset(manifest)?;
    let config = model_config_for(cfg, &dataset.header)?;

    let outcome = crossval(&config, &dataset.segments, &opts)?;

    ensure_dir(out)?;
    write_json(
        &out.join("plan.json"),
        &PlanDoc {
            config_hash: cfg.hash(),
            plan: &outcome.plan,
        },
    )?;
    let mut folds = Vec::new();
    for fold in &outcome.folds {
        fold.params
            .save(out.join(format!("fold_{}.checkpoint.json", fold.fold)))?;
        folds.push(FoldDoc {
            fold: fold.fold,
            seed: fold.seed,
            steps: fold.steps,
            epoch_losses: fold.epoch_losses.clone(),
            report: fold.report.clone(),
            baseline_report: fold.baseline_report.clone(),
            warnings: fold.warnings.clone(),
        });
    }
    let doc = CrossvalDoc {
        format_version: REPORT_FORMAT_VERSION,
        plan_file: "plan.json".to_string(),
        protocol: opts.mode,
        k: opts.k,
        fraction: outcome.plan.fraction,
        target_fps: opts.target_fps,
        seed: config.seed,
        config_hash: cfg.hash(),
        model_config: config,
        folds,
        aggregate: outcome.aggregate,
        baseline_aggregate: outcome.baseline_aggregate,
        plan_warnings: outcome.plan.warnings.clone(),
    };
    write_json(&out.join("report.json"), &doc)?;
    write_config_near(cfg, out, true)?;
    println!(
        "crossval {:?} k={}: pooled mean F = {:.4}, accuracy = {:.4}; mean-of-folds F = {:.4} (config {})",
        doc.protocol,
        doc.k,
        doc.aggregate.pooled.mean_f,
        doc.aggregate.pooled.accuracy,
        doc.aggregate.mean_of_folds_mean_f,
        cfg.hash()
    );
    Ok(())
}

