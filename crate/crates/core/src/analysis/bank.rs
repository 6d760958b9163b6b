use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::datagen::Subset;
use crate::error::{LabError, Result};
use crate::nncore::{pca_2d, Mlp};
use crate::Tensor2;

/// Features of one embedding over a set of samples, with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank {
    pub features: Tensor2,
    pub categories: Vec<usize>,
    pub domains: Vec<usize>,
    /// Index of the embedding that produced the features.
    pub task: usize,
}

impl FeatureBank {
    pub fn new(features: Tensor2, categories: Vec<usize>, domains: Vec<usize>, task: usize) -> Result<Self> {
        let n = features.rows();
        if categories.len() != n || domains.len() != n {
            return Err(LabError::Dimension {
                op: "feature bank labels",
                left: features.shape(),
                right: (categories.len(), domains.len()),
            });
        }
        Ok(FeatureBank {
            features,
            categories,
            domains,
            task,
        })
    }

    /// Runs `embedding` over every row of `slice`.
    pub fn from_embedding(embedding: &Mlp<f64>, slice: &Subset, task: usize) -> Result<Self> {
        FeatureBank::new(
            embedding.features(&slice.x)?,
            slice.categories.clone(),
            slice.domains.clone(),
            task,
        )
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn concat(banks: &[&FeatureBank]) -> Result<(Tensor2, Vec<usize>, Vec<usize>, Vec<usize>)> {
        let feats: Vec<&Tensor2> = banks.iter().map(|b| &b.features).collect();
        Ok((
            Tensor2::vstack(&feats)?,
            banks.iter().flat_map(|b| b.categories.iter().copied()).collect(),
            banks.iter().flat_map(|b| b.domains.iter().copied()).collect(),
            banks.iter().flat_map(|b| std::iter::repeat(b.task).take(b.len())).collect(),
        ))
    }
}

pub const FEATURES_2D_HEADER: &str = "pc1,pc2,category,domain,task";

/// Projects the rows of all `banks` together onto their top two principal
/// directions and writes `pc1,pc2,category,domain,task`.
pub fn export_features_2d(banks: &[&FeatureBank], path: &Path) -> Result<Tensor2> {
    let (x, categories, domains, tasks) = FeatureBank::concat(banks)?;
    let pcs = pca_2d(&x)?;
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| LabError::io(path, e);
    writeln!(w, "{FEATURES_2D_HEADER}").map_err(io)?;
    for i in 0..pcs.rows() {
        writeln!(
            w,
            "{:?},{:?},{},{},{}",
            pcs[(i, 0)],
            pcs[(i, 1)],
            categories[i],
            domains[i],
            tasks[i]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(pcs)
}
