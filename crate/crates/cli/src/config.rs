//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use poem_lab::datagen::{
    make_rotated_moons, make_shifted_gaussians, Generated, RotatedMoonsParams,
    ShiftedGaussiansParams,
};
use poem_lab::training::{SwadConfig, TrainConfig, Variant};
use poem_lab::{LabError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    RotatedMoons,
    ShiftedGaussians,
}

impl FromStr for Generator {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotated_moons" | "moons" => Ok(Generator::RotatedMoons),
            "shifted_gaussians" | "gaussians" => Ok(Generator::ShiftedGaussians),
            _ => Err(LabError::Config(format!(
                "unknown generator '{s}' (expected rotated_moons or shifted_gaussians)"
            ))),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::RotatedMoons => "rotated_moons",
            Generator::ShiftedGaussians => "shifted_gaussians",
        })
    }
}

/// Everything a command can be told. Field names double as config keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: Generator,
    pub k_domains: usize,
    pub n_per_domain: usize,
    /// Shifted Gaussians only; moons always have two.
    pub categories: usize,
    /// Largest moons rotation, radians.
    pub max_angle: f64,
    pub noise_sigma: f64,
    pub nuisance_dims: usize,
    pub nuisance_scale: f64,
    pub domain_offset_scale: f64,
    pub class_separation: f64,
    pub cluster_sigma: f64,
    pub informative_dims: usize,
    pub data_seed: u64,

    pub data: Option<PathBuf>,
    pub out: PathBuf,

    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub per_domain_batch: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub variant: Variant,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub target_domains: Vec<usize>,
    pub swad: bool,
    pub swad_n_s: usize,
    pub swad_n_e: usize,
    pub swad_r: f64,
    pub adversarial_discriminator: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let swad = SwadConfig::default();
        ExperimentConfig {
            generator: Generator::RotatedMoons,
            k_domains: 4,
            n_per_domain: 200,
            categories: 3,
            max_angle: 1.2,
            noise_sigma: 0.1,
            nuisance_dims: 2,
            nuisance_scale: 2.0,
            domain_offset_scale: 2.0,
            class_separation: 2.0,
            cluster_sigma: 1.0,
            informative_dims: 4,
            data_seed: 100,
            data: None,
            out: PathBuf::from("out"),
            steps: train.steps,
            lr: train.lr,
            weight_decay: train.weight_decay,
            dropout: train.dropout,
            per_domain_batch: train.per_domain_batch,
            hidden: train.hidden,
            feature_dim: train.feature_dim,
            variant: train.variant,
            variants: Variant::ABLATION.to_vec(),
            seeds: vec![0],
            target_domains: vec![0],
            swad: false,
            swad_n_s: swad.n_s,
            swad_n_e: swad.n_e,
            swad_r: swad.r,
            adversarial_discriminator: train.adversarial_discriminator,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| LabError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(LabError::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn parse_variant(key: &str, value: &str) -> Result<Variant> {
    value
        .parse::<Variant>()
        .map_err(|e| LabError::Config(format!("{key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(LabError::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "generator" => self.generator = v.parse()?,
            "k_domains" => self.k_domains = parse(key, v)?,
            "n_per_domain" => self.n_per_domain = parse(key, v)?,
            "categories" => self.categories = parse(key, v)?,
            "max_angle" => self.max_angle = parse(key, v)?,
            "noise_sigma" => self.noise_sigma = parse(key, v)?,
            "nuisance_dims" => self.nuisance_dims = parse(key, v)?,
            "nuisance_scale" => self.nuisance_scale = parse(key, v)?,
            "domain_offset_scale" => self.domain_offset_scale = parse(key, v)?,
            "class_separation" => self.class_separation = parse(key, v)?,
            "cluster_sigma" => self.cluster_sigma = parse(key, v)?,
            "informative_dims" => self.informative_dims = parse(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "steps" => self.steps = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "per_domain_batch" => self.per_domain_batch = parse(key, v)?,
            "hidden" => {
                // an empty value means no hidden layer
                self.hidden = if v.is_empty() { Vec::new() } else { parse_list(key, v)? }
            }
            "feature_dim" => self.feature_dim = parse(key, v)?,
            "variant" => self.variant = parse_variant(key, v)?,
            "variants" => {
                self.variants = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_variant(key, s))
                    .collect::<Result<_>>()?
            }
            "seeds" | "seed" => self.seeds = parse_list(key, v)?,
            "target_domains" | "target_domain" => self.target_domains = parse_list(key, v)?,
            "swad" => self.swad = parse_bool(key, v)?,
            "swad_n_s" => self.swad_n_s = parse(key, v)?,
            "swad_n_e" => self.swad_n_e = parse(key, v)?,
            "swad_r" => self.swad_r = parse(key, v)?,
            "adversarial_discriminator" => self.adversarial_discriminator = parse_bool(key, v)?,
            _ => return Err(LabError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and `#`
    /// comments are skipped; anything after `#` on a line is a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| LabError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Renders the config in the file format, one key per line.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (k, v) in value.as_object().expect("config is an object") {
            let rendered = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {rendered}\n"));
        }
        out
    }

    pub fn swad_config(&self) -> Option<SwadConfig> {
        self.swad.then_some(SwadConfig {
            n_s: self.swad_n_s,
            n_e: self.swad_n_e,
            r: self.swad_r,
        })
    }

    /// Training config for `variant` and `seed`, validated.
    pub fn train_config(&self, variant: Variant, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            steps: self.steps,
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            per_domain_batch: self.per_domain_batch,
            seed,
            variant,
            swad: self.swad_config(),
            adversarial_discriminator: self.adversarial_discriminator,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn generate(&self) -> Result<Generated> {
        match self.generator {
            Generator::RotatedMoons => {
                let mut p = RotatedMoonsParams::evenly_rotated(
                    self.k_domains,
                    self.n_per_domain,
                    self.max_angle,
                    self.data_seed,
                );
                p.noise_sigma = self.noise_sigma;
                p.nuisance_dims = self.nuisance_dims;
                p.nuisance_scale = self.nuisance_scale;
                make_rotated_moons(&p)
            }
            Generator::ShiftedGaussians => {
                let mut p = ShiftedGaussiansParams::new(
                    self.k_domains,
                    self.categories,
                    self.n_per_domain,
                    self.domain_offset_scale,
                    self.data_seed,
                );
                p.informative_dims = self.informative_dims;
                p.class_separation = self.class_separation;
                p.cluster_sigma = self.cluster_sigma;
                p.nuisance_dims = self.nuisance_dims;
                p.nuisance_scale = self.nuisance_scale;
                make_shifted_gaussians(&p)
            }
        }
    }
}
