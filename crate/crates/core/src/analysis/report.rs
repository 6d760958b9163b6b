use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bank::FeatureBank;
use super::metrics::{
    discriminator_accuracy, domain_centroid_xent, mean_abs_cos, mean_abs_cos_aligned,
    projection_power,
};
use crate::error::{LabError, Result};
use crate::training::MetricsRow;
use crate::PoemModel;

/// Default number of sampled pairs for [`mean_abs_cos`].
pub const COS_PAIRS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineStats {
    /// Independently sampled cross-bank pairs.
    pub sampled_pairs: f64,
    pub pairs: usize,
    /// Both embeddings of the same sample.
    pub same_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainXent {
    pub category_features: f64,
    pub domain_features: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPower {
    /// Category features against the domain features' principal directions.
    pub category_on_domain: f64,
    pub domain_on_category: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub mean_abs_cos: CosineStats,
    pub domain_xent: DomainXent,
    pub projection_power: ProjectionPower,
    /// Absent for models without a discriminator.
    pub discriminator_accuracy: Option<f64>,
    pub loss_trend: Vec<MetricsRow>,
}

impl DiagnosticsReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LabError::format(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| LabError::io(path, e))
    }
}

/// Every diagnostic for one pair of banks. `discriminator` is the
/// two-task model whose `W` should separate the banks, if there is one.
pub fn diagnose(
    category: &FeatureBank,
    domain: &FeatureBank,
    discriminator: Option<&PoemModel>,
    loss_trend: &[MetricsRow],
    seed: u64,
) -> Result<DiagnosticsReport> {
    Ok(DiagnosticsReport {
        mean_abs_cos: CosineStats {
            sampled_pairs: mean_abs_cos(category, domain, COS_PAIRS, seed)?,
            pairs: COS_PAIRS,
            same_sample: mean_abs_cos_aligned(category, domain)?,
        },
        domain_xent: DomainXent {
            category_features: domain_centroid_xent(category)?,
            domain_features: domain_centroid_xent(domain)?,
        },
        projection_power: ProjectionPower {
            category_on_domain: projection_power(category, domain)?,
            domain_on_category: projection_power(domain, category)?,
        },
        discriminator_accuracy: discriminator
            .map(|m| discriminator_accuracy(m, &[category, domain]))
            .transpose()?,
        loss_trend: loss_trend.to_vec(),
    })
}
