use rand::Rng;

use super::bank::FeatureBank;
use crate::error::{LabError, Result};
use crate::nncore::{cosine_similarity, dot, matmul, norm, svd_small};
use crate::poem::argmax_rows;
use crate::rng::stream_rng;
use crate::{PoemModel, Tensor2};

const STREAM_PAIRS: u64 = 0xc05;

fn nonempty(bank: &FeatureBank, what: &str) -> Result<()> {
    if bank.is_empty() {
        return Err(LabError::Config(format!("{what}: empty feature bank")));
    }
    Ok(())
}

/// Mean `|cos|` over `pairs` index pairs drawn uniformly and independently
/// from the two banks.
pub fn mean_abs_cos(a: &FeatureBank, b: &FeatureBank, pairs: usize, seed: u64) -> Result<f64> {
    nonempty(a, "mean_abs_cos")?;
    nonempty(b, "mean_abs_cos")?;
    if pairs == 0 {
        return Err(LabError::Config("mean_abs_cos needs at least one pair".into()));
    }
    let mut rng = stream_rng(seed, STREAM_PAIRS);
    let mut acc = 0.0;
    for _ in 0..pairs {
        let i = rng.gen_range(0..a.len());
        let j = rng.gen_range(0..b.len());
        acc += cosine_similarity(a.features.row(i), b.features.row(j))
            .map_err(|_| LabError::DegenerateFeature { sample: i })?
            .abs();
    }
    Ok(acc / pairs as f64)
}

/// Mean `|cos|` between row `k` of `a` and row `k` of `b`, i.e. between two
/// embeddings of the same sample.
pub fn mean_abs_cos_aligned(a: &FeatureBank, b: &FeatureBank) -> Result<f64> {
    nonempty(a, "mean_abs_cos_aligned")?;
    if a.len() != b.len() {
        return Err(LabError::Dimension {
            op: "mean_abs_cos_aligned",
            left: a.features.shape(),
            right: b.features.shape(),
        });
    }
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += cosine_similarity(a.features.row(k), b.features.row(k))
            .map_err(|_| LabError::DegenerateFeature { sample: k })?
            .abs();
    }
    Ok(acc / a.len() as f64)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cross-entropy of a nearest-centroid domain classifier.
///
/// Within each domain, rows at even positions fit the domain centroid and
/// rows at odd positions are scored with `P(k|x) ∝ exp(-‖f(x) - c_k‖)`.
pub fn domain_centroid_xent(bank: &FeatureBank) -> Result<f64> {
    nonempty(bank, "domain_centroid_xent")?;
    let domains = bank.domains.iter().max().map_or(0, |m| m + 1);
    let mut fit: Vec<Vec<usize>> = vec![Vec::new(); domains];
    let mut held: Vec<usize> = Vec::new();
    let mut seen = vec![0usize; domains];
    for (row, &d) in bank.domains.iter().enumerate() {
        if seen[d] % 2 == 0 {
            fit[d].push(row);
        } else {
            held.push(row);
        }
        seen[d] += 1;
    }
    let present: Vec<usize> = (0..domains).filter(|&d| seen[d] > 0).collect();
    if present.len() < 2 {
        return Err(LabError::Config("domain_centroid_xent needs at least two domains".into()));
    }
    if let Some(&d) = present.iter().find(|&&d| seen[d] < 2) {
        return Err(LabError::Config(format!("domain {d} has fewer than two samples")));
    }
    let centroids: Vec<(usize, Vec<f64>)> = present
        .iter()
        .map(|&d| {
            let rows = bank.features.select_rows(&fit[d]);
            (d, rows.mean_rows().into_vec())
        })
        .collect();
    let mut total = 0.0;
    for &row in &held {
        let f = bank.features.row(row);
        let neg: Vec<f64> = centroids.iter().map(|(_, c)| -distance(f, c)).collect();
        let max = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + neg.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let own = centroids
            .iter()
            .position(|(d, _)| *d == bank.domains[row])
            .expect("every held-out domain has a centroid");
        total += lse - neg[own];
    }
    Ok(total / held.len() as f64)
}

/// Share of the energy of `bank_i` features that falls in the principal
/// directions of `bank_j`, weighted by how much variance `bank_j` has there.
///
/// With `σ̂` the singular values of the centred `bank_j` matrix scaled to unit
/// sum of squares and `v_m` its right singular vectors, each feature `z`
/// scores `Σ σ̂_m² (v_mᵀ z)² / ‖z‖²`; the result is the mean score.
pub fn projection_power(bank_i: &FeatureBank, bank_j: &FeatureBank) -> Result<f64> {
    nonempty(bank_i, "projection_power")?;
    if bank_j.len() < bank_j.dim() {
        return Err(LabError::Config(format!(
            "projection_power needs at least {} reference rows, got {}",
            bank_j.dim(),
            bank_j.len()
        )));
    }
    if bank_i.dim() != bank_j.dim() {
        return Err(LabError::Dimension {
            op: "projection_power",
            left: bank_i.features.shape(),
            right: bank_j.features.shape(),
        });
    }
    let mean = bank_j.features.mean_rows();
    let centred = bank_j.features.sub(&Tensor2::from_fn(bank_j.len(), bank_j.dim(), |_, c| mean[(0, c)]))?;
    let svd = svd_small(&centred)?;
    let energy: f64 = svd.sigma.iter().map(|s| s * s).sum();
    if !(energy > 0.0) {
        return Err(LabError::Numeric("projection_power: reference bank has rank 0".into()));
    }
    let weights: Vec<f64> = svd.sigma.iter().map(|s| s * s / energy).collect();
    let mut acc = 0.0;
    for k in 0..bank_i.len() {
        let z = bank_i.features.row(k);
        let zz = norm(z).powi(2);
        if !(zz > 0.0) {
            return Err(LabError::DegenerateFeature { sample: k });
        }
        let mut rho = 0.0;
        for (m, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let v = svd.v.column(m);
            rho += w * dot(&v, z).powi(2);
        }
        acc += rho / zz;
    }
    Ok((acc / bank_i.len() as f64).clamp(0.0, 1.0))
}

/// Fraction of features whose discriminator argmax is the index of the
/// embedding that produced them.
pub fn discriminator_accuracy(model: &PoemModel, banks: &[&FeatureBank]) -> Result<f64> {
    let total: usize = banks.iter().map(|b| b.len()).sum();
    if total == 0 {
        return Err(LabError::Config("discriminator_accuracy: no features".into()));
    }
    let mut hits = 0;
    for bank in banks {
        model.check_task(bank.task)?;
        let pred = argmax_rows(&matmul(&bank.features, &model.discriminator)?);
        hits += pred.iter().filter(|&&p| p == bank.task).count();
    }
    Ok(hits as f64 / total as f64)
}
