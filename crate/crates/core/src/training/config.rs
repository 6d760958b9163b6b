use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::poem::LossTerms;

/// Metrics are logged every this many optimizer steps, starting at step 0.
pub const LOG_EVERY: usize = 10;

/// Training recipe. `Erm` and `NoAux` are the same single-embedding
/// classification-only model; `NoAux` exists so ablation tables can list the
/// "both auxiliary losses removed" row explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "erm")]
    Erm,
    #[serde(rename = "poem")]
    Poem,
    #[serde(rename = "poem_ls_only")]
    PoemLsOnly,
    #[serde(rename = "poem_ld_only")]
    PoemLdOnly,
    #[serde(rename = "none")]
    NoAux,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Erm,
        Variant::Poem,
        Variant::PoemLsOnly,
        Variant::PoemLdOnly,
        Variant::NoAux,
    ];

    /// The four rows of the loss ablation.
    pub const ABLATION: [Variant; 4] = [
        Variant::Erm,
        Variant::PoemLsOnly,
        Variant::PoemLdOnly,
        Variant::Poem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Erm => "erm",
            Variant::Poem => "poem",
            Variant::PoemLsOnly => "poem_ls_only",
            Variant::PoemLdOnly => "poem_ld_only",
            Variant::NoAux => "none",
        }
    }

    /// Number of elementary embeddings.
    pub fn task_count(self) -> usize {
        match self {
            Variant::Erm | Variant::NoAux => 1,
            _ => 2,
        }
    }

    pub fn is_poem_family(self) -> bool {
        self.task_count() == 2
    }

    pub fn terms(self, adversarial: bool) -> LossTerms {
        let (disentangle, discriminate) = match self {
            Variant::Erm | Variant::NoAux => (false, false),
            Variant::Poem => (true, true),
            Variant::PoemLsOnly => (true, false),
            Variant::PoemLdOnly => (false, true),
        };
        LossTerms {
            disentangle,
            discriminate,
            adversarial: adversarial && discriminate,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                LabError::Config(format!(
                    "unknown variant '{s}' (expected erm, poem, poem_ls_only, poem_ld_only or none)"
                ))
            })
    }
}

/// Patience parameters of the tail average.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwadConfig {
    /// Logs without improvement before averaging starts.
    pub n_s: usize,
    /// Consecutive over-tolerance logs that end averaging.
    pub n_e: usize,
    /// Tolerance ratio against the best validation loss in the window.
    pub r: f64,
}

impl Default for SwadConfig {
    fn default() -> Self {
        SwadConfig {
            n_s: 3,
            n_e: 6,
            r: 1.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub per_domain_batch: usize,
    pub seed: u64,
    pub variant: Variant,
    pub swad: Option<SwadConfig>,
    pub adversarial_discriminator: bool,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            lr: 3e-3,
            weight_decay: 1e-4,
            dropout: 0.0,
            per_domain_batch: 32,
            seed: 0,
            variant: Variant::Poem,
            swad: None,
            adversarial_discriminator: false,
            hidden: vec![32],
            feature_dim: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be finite and non-negative", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be finite and non-negative", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.per_domain_batch == 0 {
            return bad("per_domain_batch must be positive".into());
        }
        if self.feature_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("layer widths must be positive".into());
        }
        if let Some(s) = &self.swad {
            if !(s.r >= 1.0 && s.r.is_finite()) || s.n_e == 0 {
                return bad(format!("invalid swad parameters {s:?}"));
            }
        }
        Ok(())
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        TrainConfig {
            variant,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }

    /// Number of rows in the metrics log: `ceil(steps / LOG_EVERY)`.
    pub fn logged_rows(&self) -> usize {
        self.steps.div_ceil(LOG_EVERY)
    }
}
