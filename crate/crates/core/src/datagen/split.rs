use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{LabError, Result};
use crate::rng::stream_rng;
use crate::Tensor2;

/// Fraction of every source domain kept aside for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

const STREAM_SPLIT: u64 = 0x51;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub target_domain: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(target_domain: usize, seed: u64) -> Self {
        SplitPlan {
            target_domain,
            validation_fraction: VALIDATION_FRACTION,
            seed,
        }
    }
}

/// A slice of a dataset. `domains` are re-indexed source labels for the
/// source partitions and the original domain index for the target set.
#[derive(Clone, Debug, PartialEq)]
pub struct Subset {
    pub x: Tensor2,
    pub categories: Vec<usize>,
    pub domains: Vec<usize>,
    /// Row ids in the originating dataset.
    pub ids: Vec<usize>,
}

impl Subset {
    fn gather(ds: &LabeledDataset, ids: &[usize], relabel: impl Fn(usize) -> usize) -> Self {
        Subset {
            x: ds.x.select_rows(ids),
            categories: ids.iter().map(|&i| ds.categories[i]).collect(),
            domains: ids.iter().map(|&i| relabel(ds.domains[i])).collect(),
            ids: ids.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions (not ids) of rows with domain label `d`.
    pub fn positions_of_domain(&self, d: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domains[i] == d).collect()
    }

    pub fn concat(parts: &[&Subset]) -> Result<Subset> {
        let xs: Vec<&Tensor2> = parts.iter().map(|p| &p.x).collect();
        Ok(Subset {
            x: Tensor2::vstack(&xs)?,
            categories: parts.iter().flat_map(|p| p.categories.iter().copied()).collect(),
            domains: parts.iter().flat_map(|p| p.domains.iter().copied()).collect(),
            ids: parts.iter().flat_map(|p| p.ids.iter().copied()).collect(),
        })
    }
}

/// Everything a trainer may see: source-domain training and validation data.
#[derive(Clone, Debug)]
pub struct SourceData {
    pub train: Subset,
    pub validation: Subset,
    /// `K`, the number of source domains.
    pub source_count: usize,
    pub category_count: usize,
    /// `source_domains[k]` is the original index of source domain `k`.
    pub source_domains: Vec<usize>,
}

impl SourceData {
    pub fn input_dim(&self) -> usize {
        self.train.x.cols()
    }
}

/// Leave-one-domain-out split.
#[derive(Clone, Debug)]
pub struct DomainSplit {
    pub sources: SourceData,
    pub target: Subset,
    pub plan: SplitPlan,
}

/// Holds out `plan.target_domain`, re-indexes the remaining domains
/// `0..K-1` in their original order, and splits each source domain into
/// training and validation parts.
pub fn leave_one_domain_out(ds: &LabeledDataset, plan: &SplitPlan) -> Result<DomainSplit> {
    if plan.target_domain >= ds.domain_count {
        return Err(LabError::Index {
            what: "target domain",
            index: plan.target_domain,
            len: ds.domain_count,
        });
    }
    if !(0.0..1.0).contains(&plan.validation_fraction) {
        return Err(LabError::Config(format!(
            "validation fraction {} outside [0, 1)",
            plan.validation_fraction
        )));
    }
    let source_domains: Vec<usize> = (0..ds.domain_count)
        .filter(|&d| d != plan.target_domain)
        .collect();
    if source_domains.len() < 2 {
        return Err(LabError::Config(
            "leave-one-domain-out needs at least two source domains".into(),
        ));
    }
    let mut remap = vec![usize::MAX; ds.domain_count];
    for (k, &d) in source_domains.iter().enumerate() {
        remap[d] = k;
    }

    let mut rng = stream_rng(plan.seed, STREAM_SPLIT);
    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    for &d in &source_domains {
        let mut ids = ds.domain_ids(d);
        if ids.is_empty() {
            return Err(LabError::Config(format!("source domain {d} has no samples")));
        }
        ids.shuffle(&mut rng);
        let n_val = (ids.len() as f64 * plan.validation_fraction).round() as usize;
        let (val, train) = ids.split_at(n_val);
        let mut val = val.to_vec();
        let mut train = train.to_vec();
        val.sort_unstable();
        train.sort_unstable();
        val_ids.extend(val);
        train_ids.extend(train);
    }
    let relabel = |d: usize| remap[d];
    let target_ids = ds.domain_ids(plan.target_domain);
    Ok(DomainSplit {
        sources: SourceData {
            train: Subset::gather(ds, &train_ids, relabel),
            validation: Subset::gather(ds, &val_ids, relabel),
            source_count: source_domains.len(),
            category_count: ds.category_count,
            source_domains,
        },
        target: Subset::gather(ds, &target_ids, |d| d),
        plan: plan.clone(),
    })
}
