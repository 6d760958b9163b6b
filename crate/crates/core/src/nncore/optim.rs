use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use crate::error::{LabError, Result};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adaptive-moment optimizer with decoupled weight decay.
///
/// Moment buffers are created lazily on the first step so one state can be
/// attached to any parameter list; later steps must present the same shapes
/// in the same order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamW<T> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Matrix<T>>, grads: Vec<&Matrix<T>>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(LabError::Dimension {
                op: "optimizer_step",
                left: (params.len(), 1),
                right: (grads.len(), 1),
            });
        }
        for (p, g) in params.iter().zip(&grads) {
            if p.shape() != g.shape() {
                return Err(LabError::Dimension {
                    op: "optimizer_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        if self.first.is_empty() {
            self.first = grads
                .iter()
                .map(|g| Matrix::zeros(g.rows(), g.cols()))
                .collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len()
            || self.first.iter().zip(&grads).any(|(m, g)| m.shape() != g.shape())
        {
            return Err(LabError::Config(
                "optimizer state does not match the parameter list".into(),
            ));
        }

        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let one = T::one();
        let bc1 = one - T::of(self.beta1.powi(self.step as i32));
        let bc2 = one - T::of(self.beta2.powi(self.step as i32));
        let lr = T::of(self.lr);
        let wd = T::of(self.weight_decay);
        let eps = T::of(self.eps);
        let frozen = self.lr == 0.0 && self.weight_decay == 0.0;

        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let ps = p.as_mut_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for (k, &gk) in g.as_slice().iter().enumerate() {
                ms[k] = b1 * ms[k] + (one - b1) * gk;
                vs[k] = b2 * vs[k] + (one - b2) * gk * gk;
                if frozen {
                    continue;
                }
                let mhat = ms[k] / bc1;
                let vhat = vs[k] / bc2;
                ps[k] = ps[k] - lr * (mhat / (vhat.sqrt() + eps) + wd * ps[k]);
            }
        }
        Ok(())
    }
}
