use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, Variant};
use super::swad::SwadSummary;
use crate::error::{LabError, Result};

pub const OPTIMIZER_NOTE: &str =
    "adamw(beta1=0.9, beta2=0.999, eps=1e-8, decoupled weight decay)";

/// One logged evaluation on the source validation split.
///
/// `l_s` is the mean over ordered embedding pairs and `l_d` the mean over
/// tasks; both are absent for single-embedding models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub l_c: Vec<f64>,
    pub l_s: Option<f64>,
    pub l_d: Option<f64>,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub variant: Variant,
    pub config: TrainConfig,
    pub rows: Vec<MetricsRow>,
    /// Evaluation of the final parameters, after step `steps`.
    pub final_row: MetricsRow,
    pub source_category_accuracy: f64,
    /// Domain-task accuracy on the source validation split, from the
    /// domain embedding or, for ERM, from the companion domain model.
    pub source_domain_accuracy: Option<f64>,
    pub target_domain: Option<usize>,
    pub target_accuracy: Option<f64>,
    pub swad: Option<SwadSummary>,
    pub optimizer: String,
    pub wall_clock_secs: f64,
}

impl TrialReport {
    /// Copy with the wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        TrialReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| LabError::format(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| LabError::io(path, e))
    }
}

pub const METRICS_HEADER: &str = "step,l_c0,l_c1,l_s,l_d,val_acc";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// `metrics.csv`: `step,l_c0,l_c1,l_s,l_d,val_acc`; absent values are
/// empty fields.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| LabError::io(path, e);
    writeln!(w, "{METRICS_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{:?}",
            r.step,
            opt(r.l_c.first().copied()),
            opt(r.l_c.get(1).copied()),
            opt(r.l_s),
            opt(r.l_d),
            r.val_acc
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| LabError::format(path, e))?;
    let header = reader.headers().map_err(|e| LabError::format(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(LabError::format(path, format!("expected header {METRICS_HEADER}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LabError::format(path, e))?;
        let bad = || LabError::format(path, format!("row {}: malformed field", line + 1));
        let field = |j: usize| -> Result<Option<f64>> {
            let s = rec.get(j).ok_or_else(bad)?.trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad())
            }
        };
        let step = rec.get(0).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let l_c = [field(1)?, field(2)?].into_iter().flatten().collect();
        rows.push(MetricsRow {
            step,
            l_c,
            l_s: field(3)?,
            l_d: field(4)?,
            val_acc: field(5)?.ok_or_else(bad)?,
        });
    }
    Ok(rows)
}
