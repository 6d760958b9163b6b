use serde::{Deserialize, Serialize};

use super::config::SwadConfig;
use crate::error::Result;
use crate::poem::{assign_flat, flatten};
use crate::CategoryModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwadPhase {
    Waiting,
    Averaging,
    Done,
}

/// Patience-gated uniform tail average over logged parameter snapshots.
///
/// Averaging starts once the validation loss has not improved for `n_s`
/// consecutive logs. While averaging, the best loss seen inside the window
/// is tracked; `n_e` consecutive logs above `r` times that best end the
/// window, and those over-tolerance snapshots are left out of the average.
#[derive(Clone, Debug)]
pub struct SwadState {
    config: SwadConfig,
    phase: SwadPhase,
    best: f64,
    stale: usize,
    window_best: f64,
    sum: Vec<f64>,
    count: usize,
    pending: Vec<f64>,
    pending_count: usize,
    started_at: Option<usize>,
    ended_at: Option<usize>,
    history: Vec<(usize, f64)>,
}

impl SwadState {
    pub fn new(config: SwadConfig) -> Self {
        SwadState {
            config,
            phase: SwadPhase::Waiting,
            best: f64::INFINITY,
            stale: 0,
            window_best: f64::INFINITY,
            sum: Vec::new(),
            count: 0,
            pending: Vec::new(),
            pending_count: 0,
            started_at: None,
            ended_at: None,
            history: Vec::new(),
        }
    }

    pub fn phase(&self) -> SwadPhase {
        self.phase
    }

    pub fn snapshot_count(&self) -> usize {
        self.count
    }

    pub fn started_at(&self) -> Option<usize> {
        self.started_at
    }

    pub fn ended_at(&self) -> Option<usize> {
        self.ended_at
    }

    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }

    fn accumulate(into: &mut Vec<f64>, params: &[f64]) {
        if into.is_empty() {
            into.extend_from_slice(params);
        } else {
            for (s, p) in into.iter_mut().zip(params) {
                *s += p;
            }
        }
    }

    fn commit_pending(&mut self) {
        if self.pending_count > 0 {
            let pending = std::mem::take(&mut self.pending);
            Self::accumulate(&mut self.sum, &pending);
            self.count += self.pending_count;
            self.pending_count = 0;
        }
    }

    /// Records one logged step.
    pub fn update_flat(&mut self, step: usize, params: &[f64], val_loss: f64) {
        self.history.push((step, val_loss));
        match self.phase {
            SwadPhase::Waiting => {
                if val_loss < self.best {
                    self.best = val_loss;
                    self.stale = 0;
                } else {
                    self.stale += 1;
                }
                if self.stale >= self.config.n_s {
                    self.phase = SwadPhase::Averaging;
                    self.started_at = Some(step);
                    self.window_best = val_loss;
                    Self::accumulate(&mut self.sum, params);
                    self.count = 1;
                }
            }
            SwadPhase::Averaging => {
                self.window_best = self.window_best.min(val_loss);
                if val_loss > self.config.r * self.window_best {
                    Self::accumulate(&mut self.pending, params);
                    self.pending_count += 1;
                    if self.pending_count >= self.config.n_e {
                        self.pending.clear();
                        self.pending_count = 0;
                        self.phase = SwadPhase::Done;
                        self.ended_at = Some(step);
                    }
                } else {
                    self.commit_pending();
                    Self::accumulate(&mut self.sum, params);
                    self.count += 1;
                }
            }
            SwadPhase::Done => {}
        }
    }

    pub fn update(&mut self, step: usize, model: &CategoryModel, val_loss: f64) {
        self.update_flat(step, &flatten(&model.params()), val_loss);
    }

    /// Uniform mean of the snapshots in the window, if averaging started.
    /// Over-tolerance snapshots still pending when training stops count as
    /// part of the window.
    pub fn average_flat(&self) -> Option<Vec<f64>> {
        let mut sum = self.sum.clone();
        let mut count = self.count;
        if self.phase == SwadPhase::Averaging && self.pending_count > 0 {
            Self::accumulate(&mut sum, &self.pending);
            count += self.pending_count;
        }
        if count == 0 {
            return None;
        }
        let inv = 1.0 / count as f64;
        Some(sum.into_iter().map(|s| s * inv).collect())
    }

    /// The averaged parameters shaped like `template`.
    pub fn average(&self, template: &CategoryModel) -> Result<Option<CategoryModel>> {
        match self.average_flat() {
            None => Ok(None),
            Some(flat) => {
                let mut out = template.clone();
                assign_flat(out.params_mut(), &flat)?;
                Ok(Some(out))
            }
        }
    }
}

/// What the tail average did during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwadSummary {
    pub method: String,
    pub n_s: usize,
    pub n_e: usize,
    pub r: f64,
    pub started_at: Option<usize>,
    pub ended_at: Option<usize>,
    pub snapshots: usize,
    /// True when averaging never started and the final iterate is used.
    pub fallback_to_final: bool,
    pub source_category_accuracy: f64,
    pub target_accuracy: Option<f64>,
}

pub(crate) const SWAD_METHOD: &str =
    "patience-gated uniform tail average of logged category parameters (simplified SWAD)";
