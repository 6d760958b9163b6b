use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{DomainSpec, LabeledDataset};
use crate::error::{LabError, Result};
use crate::rng::stream_rng;
use crate::Tensor2;

/// Centre of the two-moons base shape; domain rotations pivot around it.
pub const MOONS_CENTER: [f64; 2] = [0.5, 0.25];

const STREAM_DOMAINS: u64 = 1;
const STREAM_SAMPLES: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedMoonsParams {
    pub k_domains: usize,
    pub n_per_domain: usize,
    /// Rotation per domain, radians; must be pairwise distinct.
    pub angles: Vec<f64>,
    pub noise_sigma: f64,
    pub nuisance_dims: usize,
    /// Spread of the per-domain nuisance codes.
    pub nuisance_scale: f64,
    pub seed: u64,
}

impl RotatedMoonsParams {
    /// `k` domains with rotations evenly spaced over `[0, max_angle]`.
    pub fn evenly_rotated(k: usize, n_per_domain: usize, max_angle: f64, seed: u64) -> Self {
        let angles = (0..k)
            .map(|d| if k > 1 { max_angle * d as f64 / (k - 1) as f64 } else { 0.0 })
            .collect();
        RotatedMoonsParams {
            k_domains: k,
            n_per_domain,
            angles,
            noise_sigma: 0.1,
            nuisance_dims: 2,
            nuisance_scale: 2.0,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedGaussiansParams {
    pub k_domains: usize,
    pub categories: usize,
    pub n_per_domain: usize,
    pub domain_offset_scale: f64,
    /// Dimension of the category-informative coordinates.
    pub informative_dims: usize,
    /// Distance of each class mean from the origin.
    pub class_separation: f64,
    pub cluster_sigma: f64,
    pub nuisance_dims: usize,
    pub nuisance_scale: f64,
    pub seed: u64,
}

impl ShiftedGaussiansParams {
    pub fn new(
        k_domains: usize,
        categories: usize,
        n_per_domain: usize,
        domain_offset_scale: f64,
        seed: u64,
    ) -> Self {
        ShiftedGaussiansParams {
            k_domains,
            categories,
            n_per_domain,
            domain_offset_scale,
            informative_dims: 4,
            class_separation: 2.0,
            cluster_sigma: 1.0,
            nuisance_dims: 2,
            nuisance_scale: 2.0,
            seed,
        }
    }
}

/// Generated data plus the transforms that produced it.
#[derive(Clone, Debug)]
pub struct Generated {
    pub dataset: LabeledDataset,
    pub domains: Vec<DomainSpec>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_vector(rng: &mut ChaCha8Rng, dims: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| gaussian(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Base two-moons points: `ceil(n/2)` on the outer arc (category 0) and
/// `floor(n/2)` on the inner arc (category 1), evenly spaced in angle.
pub fn base_moons(n: usize) -> Vec<([f64; 2], usize)> {
    let outer = n.div_ceil(2);
    let inner = n / 2;
    let arc = |count: usize, k: usize| {
        if count > 1 {
            PI * k as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..outer {
        let t = arc(outer, k);
        out.push(([t.cos(), t.sin()], 0));
    }
    for k in 0..inner {
        let t = arc(inner, k);
        out.push(([1.0 - t.cos(), 1.0 - t.sin() - 0.5], 1));
    }
    out
}

fn nuisance_codes(rng: &mut ChaCha8Rng, k: usize, dims: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| (0..dims).map(|_| scale * gaussian(rng)).collect())
        .collect()
}

/// Two-category moons, one rotation per domain, plus nuisance coordinates
/// holding a per-domain constant code with additive noise.
///
/// Layout of a row: `[u, v, nuisance_0, ..., nuisance_{m-1}]`.
pub fn make_rotated_moons(p: &RotatedMoonsParams) -> Result<Generated> {
    if p.k_domains < 3 {
        return Err(LabError::Config(format!(
            "rotated moons need at least 3 domains, got {}",
            p.k_domains
        )));
    }
    if p.angles.len() != p.k_domains {
        return Err(LabError::Config(format!(
            "{} angles given for {} domains",
            p.angles.len(),
            p.k_domains
        )));
    }
    for i in 0..p.angles.len() {
        for j in (i + 1)..p.angles.len() {
            if p.angles[i] == p.angles[j] {
                return Err(LabError::Config(format!(
                    "domains {i} and {j} share rotation {}",
                    p.angles[i]
                )));
            }
        }
    }
    if p.n_per_domain < 2 {
        return Err(LabError::Config("need at least 2 samples per domain".into()));
    }

    let mut dom_rng = stream_rng(p.seed, STREAM_DOMAINS);
    let codes = nuisance_codes(&mut dom_rng, p.k_domains, p.nuisance_dims, p.nuisance_scale);
    let specs: Vec<DomainSpec> = (0..p.k_domains)
        .map(|d| DomainSpec {
            domain_id: d,
            angle: p.angles[d],
            scale: 1.0,
            offset: vec![0.0, 0.0],
            nuisance_code: codes[d].clone(),
            noise_sigma: p.noise_sigma,
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }

    let dim = 2 + p.nuisance_dims;
    let n = p.k_domains * p.n_per_domain;
    let mut data = Vec::with_capacity(n * dim);
    let mut categories = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    let mut rng = stream_rng(p.seed, STREAM_SAMPLES);
    let base = base_moons(p.n_per_domain);
    for spec in &specs {
        let (s, c) = spec.angle.sin_cos();
        for &(pt, label) in &base {
            let mut u = pt[0];
            let mut v = pt[1];
            if spec.noise_sigma > 0.0 {
                u += spec.noise_sigma * gaussian(&mut rng);
                v += spec.noise_sigma * gaussian(&mut rng);
            }
            let du = u - MOONS_CENTER[0];
            let dv = v - MOONS_CENTER[1];
            data.push(spec.scale * (c * du - s * dv) + MOONS_CENTER[0] + spec.offset[0]);
            data.push(spec.scale * (s * du + c * dv) + MOONS_CENTER[1] + spec.offset[1]);
            for &code in &spec.nuisance_code {
                let noise = if spec.noise_sigma > 0.0 {
                    spec.noise_sigma * gaussian(&mut rng)
                } else {
                    0.0
                };
                data.push(code + noise);
            }
            categories.push(label);
            domains.push(spec.domain_id);
        }
    }
    let x = Tensor2::from_vec(n, dim, data)?;
    Ok(Generated {
        dataset: LabeledDataset::new(x, categories, domains, 2, p.k_domains)?,
        domains: specs,
    })
}

/// Gaussian class clusters shared by all domains; each domain adds its own
/// offset (a random direction scaled by `domain_offset_scale`) to every
/// coordinate, and optionally writes a per-domain code into nuisance
/// coordinates.
///
/// Layout of a row: `[informative..., nuisance...]`.
pub fn make_shifted_gaussians(p: &ShiftedGaussiansParams) -> Result<Generated> {
    if p.categories < 2 {
        return Err(LabError::Config(format!(
            "need at least 2 categories, got {}",
            p.categories
        )));
    }
    if p.k_domains < 3 {
        return Err(LabError::Config(format!(
            "need at least 3 domains, got {}",
            p.k_domains
        )));
    }
    if p.n_per_domain == 0 || p.n_per_domain % p.categories != 0 {
        return Err(LabError::Config(format!(
            "n_per_domain {} must be a positive multiple of {} categories",
            p.n_per_domain, p.categories
        )));
    }
    if p.informative_dims == 0 || p.cluster_sigma < 0.0 || p.domain_offset_scale < 0.0 {
        return Err(LabError::Config("invalid shifted-gaussian parameters".into()));
    }
    let dim = p.informative_dims + p.nuisance_dims;
    let mut dom_rng = stream_rng(p.seed, STREAM_DOMAINS);
    let means: Vec<Vec<f64>> = (0..p.categories)
        .map(|_| {
            unit_vector(&mut dom_rng, p.informative_dims)
                .into_iter()
                .map(|v| v * p.class_separation)
                .collect()
        })
        .collect();
    let codes = nuisance_codes(&mut dom_rng, p.k_domains, p.nuisance_dims, p.nuisance_scale);
    let specs: Vec<DomainSpec> = (0..p.k_domains)
        .map(|d| DomainSpec {
            domain_id: d,
            angle: 0.0,
            scale: 1.0,
            offset: unit_vector(&mut dom_rng, p.informative_dims)
                .into_iter()
                .map(|v| v * p.domain_offset_scale)
                .collect(),
            nuisance_code: codes[d].clone(),
            noise_sigma: p.cluster_sigma,
        })
        .collect();

    let n = p.k_domains * p.n_per_domain;
    let per_class = p.n_per_domain / p.categories;
    let mut data = Vec::with_capacity(n * dim);
    let mut categories = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    let mut rng = stream_rng(p.seed, STREAM_SAMPLES);
    for spec in &specs {
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..per_class {
                for j in 0..p.informative_dims {
                    data.push(mean[j] + spec.offset[j] + spec.noise_sigma * gaussian(&mut rng));
                }
                for &code in &spec.nuisance_code {
                    data.push(code + spec.noise_sigma * gaussian(&mut rng));
                }
                categories.push(c);
                domains.push(spec.domain_id);
            }
        }
    }
    let x = Tensor2::from_vec(n, dim, data)?;
    Ok(Generated {
        dataset: LabeledDataset::new(x, categories, domains, p.categories, p.k_domains)?,
        domains: specs,
    })
}
