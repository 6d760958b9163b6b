use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, Variant};
use super::trainer::run_trial;
use crate::datagen::{leave_one_domain_out, LabeledDataset, SplitPlan};
use crate::error::{LabError, Result};

/// Environment variable capping how many trials run at once.
pub const THREADS_ENV: &str = "POEM_LAB_THREADS";

/// Thread pool for independent trials, sized by `POEM_LAB_THREADS` when set.
pub fn trial_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| LabError::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub target_domain: usize,
    pub target_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub variant: Variant,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
}

/// Trains every `(variant, target, seed)` combination. Each trial splits
/// `dataset` with `SplitPlan::new(target, seed)`, so variants sharing a seed
/// and target see the same split. Rows come back ordered by variant (as
/// given), then target, then seed, whatever order the trials finished in.
pub fn run_ablation(
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    targets: &[usize],
    dataset: &LabeledDataset,
) -> Result<Vec<AblationRow>> {
    let jobs: Vec<(Variant, usize, u64)> = variants
        .iter()
        .flat_map(|&v| targets.iter().flat_map(move |&t| seeds.iter().map(move |&s| (v, t, s))))
        .collect();
    let pool = trial_pool()?;
    let results: Vec<Result<AblationRow>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(variant, target_domain, seed)| {
                let split = leave_one_domain_out(dataset, &SplitPlan::new(target_domain, seed))?;
                let config = base.with_variant(variant).with_seed(seed);
                let trial = run_trial(&config, &split, false)?;
                Ok(AblationRow {
                    variant,
                    seed,
                    target_domain,
                    target_accuracy: trial.outcome.report.target_accuracy.unwrap_or(f64::NAN),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

/// Mean and sample standard deviation of a series (std 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Per-variant aggregate in first-appearance order.
pub fn summarize(rows: &[AblationRow]) -> Vec<AblationSummary> {
    let mut order: Vec<Variant> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
    }
    order
        .into_iter()
        .map(|variant| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == variant)
                .map(|r| r.target_accuracy)
                .collect();
            let (mean, std) = mean_std(&accs);
            AblationSummary {
                variant,
                trials: accs.len(),
                mean,
                std,
            }
        })
        .collect()
}
