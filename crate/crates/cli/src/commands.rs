use std::fs;
use std::path::{Path, PathBuf};

use poem_lab::analysis::{diagnose, export_features_2d, DiagnosticsReport, FeatureBank};
use poem_lab::datagen::{leave_one_domain_out, DomainSpec, LabeledDataset, SplitPlan};
use poem_lab::gradsuite::{run_suite, Fault, SuiteReport};
use poem_lab::training::{
    mean_std, run_ablation, run_trial, summarize, trial_pool, write_metrics_csv, AblationRow,
    AblationSummary, MetricsRow, TrainConfig, Variant,
};
use poem_lab::{CategoryModel, LabError, PoemModel, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const DATASET_FILE: &str = "dataset.csv";
pub const DATASET_META_FILE: &str = "dataset.json";
pub const MODEL_FORMAT: &str = "poem-lab-model/1";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| LabError::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| LabError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::format(path, e))
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| LabError::Config("no dataset given (set `data` or pass --data)".into()))?;
    if !path.exists() {
        return Err(LabError::Config(format!("dataset {} does not exist", path.display())));
    }
    LabeledDataset::read_csv(path, None, None)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: ExperimentConfig,
    pub rows: usize,
    pub input_dim: usize,
    pub category_count: usize,
    pub domain_count: usize,
    pub domains: Vec<DomainSpec>,
}

/// Writes `dataset.csv` and its `dataset.json` sidecar into `cfg.out`.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let generated = cfg.generate()?;
    let ds = &generated.dataset;
    create_dir(&cfg.out)?;
    let csv_path = cfg.out.join(DATASET_FILE);
    ds.write_csv(&csv_path)?;
    let meta = DatasetMeta {
        config: cfg.clone(),
        rows: ds.len(),
        input_dim: ds.input_dim(),
        category_count: ds.category_count,
        domain_count: ds.domain_count,
        domains: generated.domains.clone(),
    };
    write_json(&cfg.out.join(DATASET_META_FILE), &meta)?;
    println!(
        "wrote {} ({} rows, {} domains, input dim {})",
        csv_path.display(),
        meta.rows,
        meta.domain_count,
        meta.input_dim
    );
    Ok(csv_path)
}

/// Everything `analyze` needs to rebuild a trained run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub variant: Variant,
    pub config: TrainConfig,
    pub target_domain: usize,
    pub split_seed: u64,
    pub model: PoemModel,
    /// Separately trained domain model paired with a single-embedding run.
    pub domain_model: Option<PoemModel>,
    pub swad_model: Option<CategoryModel>,
    pub metrics: Vec<MetricsRow>,
}

impl ModelArtifact {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(LabError::Config(format!("model file {} does not exist", path.display())));
        }
        let artifact: ModelArtifact = read_json(path)?;
        if artifact.format != MODEL_FORMAT {
            return Err(LabError::format(path, format!("unsupported model format '{}'", artifact.format)));
        }
        artifact.model.validate()?;
        Ok(artifact)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub target_accuracy: f64,
    pub swad_target_accuracy: Option<f64>,
    pub source_category_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Aggregate {
            trials: values.len(),
            mean,
            std,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config: ExperimentConfig,
    pub variant: Variant,
    pub target_domain: usize,
    pub seeds: Vec<SeedSummary>,
    pub target_accuracy: Aggregate,
    pub swad_target_accuracy: Option<Aggregate>,
}

fn single_target(cfg: &ExperimentConfig) -> Result<usize> {
    match cfg.target_domains.as_slice() {
        [t] => Ok(*t),
        other => Err(LabError::Config(format!(
            "train takes exactly one target domain, got {other:?}"
        ))),
    }
}

/// Trains `cfg.variant` once per seed; writes `seed_N/` folders and a
/// top-level `report.json`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let ds = load_dataset(cfg)?;
    let target = single_target(cfg)?;
    let configs: Vec<TrainConfig> = cfg
        .seeds
        .iter()
        .map(|&s| cfg.train_config(cfg.variant, s))
        .collect::<Result<_>>()?;
    create_dir(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.to_text()).map_err(|e| LabError::io(&cfg.out, e))?;

    let pool = trial_pool()?;
    let trials: Vec<Result<SeedSummary>> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|tc| {
                let split = leave_one_domain_out(&ds, &SplitPlan::new(target, tc.seed))?;
                let trial = run_trial(tc, &split, true)?;
                let dir = cfg.out.join(format!("seed_{}", tc.seed));
                create_dir(&dir)?;
                let report = &trial.outcome.report;
                write_metrics_csv(&dir.join("metrics.csv"), &report.rows)?;
                report.write_json(&dir.join("report.json"))?;
                let artifact = ModelArtifact {
                    format: MODEL_FORMAT.into(),
                    variant: tc.variant,
                    config: tc.clone(),
                    target_domain: target,
                    split_seed: tc.seed,
                    model: trial.outcome.model.clone(),
                    domain_model: trial.companion.as_ref().map(|c| c.model.clone()),
                    swad_model: trial.outcome.swad_model.clone(),
                    metrics: report.rows.clone(),
                };
                write_json(&dir.join("model.json"), &artifact)?;
                Ok(SeedSummary {
                    seed: tc.seed,
                    target_accuracy: report.target_accuracy.unwrap_or(f64::NAN),
                    swad_target_accuracy: report.swad.as_ref().and_then(|s| s.target_accuracy),
                    source_category_accuracy: report.source_category_accuracy,
                })
            })
            .collect()
    });
    let seeds: Vec<SeedSummary> = trials.into_iter().collect::<Result<_>>()?;
    let accs: Vec<f64> = seeds.iter().map(|s| s.target_accuracy).collect();
    let swad: Option<Vec<f64>> = seeds.iter().map(|s| s.swad_target_accuracy).collect();
    let summary = TrainSummary {
        config: cfg.clone(),
        variant: cfg.variant,
        target_domain: target,
        target_accuracy: Aggregate::of(&accs),
        swad_target_accuracy: swad.filter(|v| !v.is_empty()).map(|v| Aggregate::of(&v)),
        seeds,
    };
    write_json(&cfg.out.join("report.json"), &summary)?;
    for s in &summary.seeds {
        println!("seed {}: target accuracy {:.4}", s.seed, s.target_accuracy);
    }
    println!(
        "{} on target domain {}: {:.4} ± {:.4} over {} seeds",
        summary.variant,
        target,
        summary.target_accuracy.mean,
        summary.target_accuracy.std,
        summary.target_accuracy.trials
    );
    Ok(summary)
}

pub const ABLATION_FILE: &str = "ablation.csv";

/// One line of `ablation.csv`. Detail rows have `kind = trial` and a seed and
/// target; aggregate rows have `kind = aggregate`, empty seed and target, the
/// mean in `target_accuracy` and the sample std in `std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationLine {
    pub kind: String,
    pub variant: Variant,
    pub seed: Option<u64>,
    pub target_domain: Option<usize>,
    pub target_accuracy: f64,
    pub std: Option<f64>,
    pub trials: usize,
}

impl AblationLine {
    fn detail(r: &AblationRow) -> Self {
        AblationLine {
            kind: "trial".into(),
            variant: r.variant,
            seed: Some(r.seed),
            target_domain: Some(r.target_domain),
            target_accuracy: r.target_accuracy,
            std: None,
            trials: 1,
        }
    }

    fn aggregate(s: &AblationSummary) -> Self {
        AblationLine {
            kind: "aggregate".into(),
            variant: s.variant,
            seed: None,
            target_domain: None,
            target_accuracy: s.mean,
            std: Some(s.std),
            trials: s.trials,
        }
    }
}

pub fn write_ablation_csv(path: &Path, lines: &[AblationLine]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| LabError::format(path, e))?;
    for l in lines {
        w.serialize(l).map_err(|e| LabError::format(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

#[cfg_attr(not(test), allow(dead_code))]
pub fn read_ablation_csv(path: &Path) -> Result<Vec<AblationLine>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::format(path, e))?;
    r.deserialize()
        .map(|l| l.map_err(|e| LabError::format(path, e)))
        .collect()
}

#[derive(Debug, Serialize)]
struct AblationReport<'a> {
    config: &'a ExperimentConfig,
    summary: &'a [AblationSummary],
}

/// Every variant on every seed and target; writes `ablation.csv` and
/// `report.json`.
pub fn ablate(cfg: &ExperimentConfig) -> Result<Vec<AblationLine>> {
    let ds = load_dataset(cfg)?;
    if cfg.variants.is_empty() {
        return Err(LabError::Config("no variants to ablate".into()));
    }
    let base = cfg.train_config(cfg.variant, cfg.seeds[0])?;
    create_dir(&cfg.out)?;
    let rows = run_ablation(&base, &cfg.variants, &cfg.seeds, &cfg.target_domains, &ds)?;
    let summary = summarize(&rows);
    let mut lines: Vec<AblationLine> = rows.iter().map(AblationLine::detail).collect();
    lines.extend(summary.iter().map(AblationLine::aggregate));
    write_ablation_csv(&cfg.out.join(ABLATION_FILE), &lines)?;
    write_json(
        &cfg.out.join("report.json"),
        &AblationReport {
            config: cfg,
            summary: &summary,
        },
    )?;
    for s in &summary {
        println!("{:<13} {:.4} ± {:.4} ({} trials)", s.variant.name(), s.mean, s.std, s.trials);
    }
    Ok(lines)
}

/// Diagnostics of a saved run, computed on its source validation split.
pub fn analyze(model_path: &Path, data: &Path, out: &Path) -> Result<DiagnosticsReport> {
    let artifact = ModelArtifact::read(model_path)?;
    if !data.exists() {
        return Err(LabError::Config(format!("dataset {} does not exist", data.display())));
    }
    let ds = LabeledDataset::read_csv(data, None, None)?;
    let split = leave_one_domain_out(&ds, &SplitPlan::new(artifact.target_domain, artifact.split_seed))?;
    if split.sources.input_dim() != artifact.model.input_dim() {
        return Err(LabError::Config(format!(
            "dataset has {} input columns but the model expects {}",
            split.sources.input_dim(),
            artifact.model.input_dim()
        )));
    }
    let validation = &split.sources.validation;
    let model = &artifact.model;
    let (domain_embedding, discriminator) = if model.task_count() >= 2 {
        (&model.embeddings[1], Some(model))
    } else {
        let companion = artifact.domain_model.as_ref().ok_or_else(|| {
            LabError::Config("single-embedding model file has no paired domain model".into())
        })?;
        (&companion.embeddings[0], None)
    };
    let category = FeatureBank::from_embedding(&model.embeddings[0], validation, 0)?;
    let domain = FeatureBank::from_embedding(domain_embedding, validation, 1)?;
    let report = diagnose(&category, &domain, discriminator, &artifact.metrics, artifact.split_seed)?;

    create_dir(out)?;
    report.write_json(&out.join("diagnostics.json"))?;
    export_features_2d(&[&category, &domain], &out.join("features_2d.csv"))?;
    write_metrics_csv(&out.join("loss_trend.csv"), &artifact.metrics)?;
    println!(
        "mean |cos| {:.4}, domain xent (category features) {:.4}, projection power {:.4}",
        report.mean_abs_cos.sampled_pairs,
        report.domain_xent.category_features,
        report.projection_power.category_on_domain
    );
    Ok(report)
}

pub fn gradcheck(models: usize, fault: Fault) -> Result<SuiteReport> {
    let report = run_suite(models, fault)?;
    for r in &report.results {
        println!(
            "{:<22} worst rel error {:.3e} over {} cases  {}",
            r.name,
            r.worst_rel_error,
            r.cases,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(report)
}
