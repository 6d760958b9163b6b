use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Fully connected layer, `y = x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

/// Multi-layer perceptron with rectifier hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// `inputs[l]` is what layer `l` consumed; `inputs[0]` is the batch.
    pub inputs: Vec<Matrix<T>>,
    pub pre_activations: Vec<Matrix<T>>,
    pub masks: Option<Vec<Matrix<T>>>,
    pub output: Matrix<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights. Hidden biases start at zero; the output bias
    /// is drawn from the same uniform range so that an input which silences
    /// every hidden unit still maps to a non-zero feature.
    /// `widths` lists every layer width including input and output,
    /// e.g. `[D, 32, 32, L]`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(LabError::Config(format!(
                "mlp widths must list at least input and output, all positive: {widths:?}"
            )));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Matrix::from_fn(fan_in, fan_out, |_, _| T::of(rng.gen_range(-limit..limit)));
                let bias = if l == last {
                    Matrix::from_fn(1, fan_out, |_, _| T::of(rng.gen_range(-limit..limit)))
                } else {
                    Matrix::zeros(1, fan_out)
                };
                Dense { weight, bias }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: Matrix::zeros(1, l.bias.cols()),
                })
                .collect(),
        }
    }

    /// Single linear layer; convenient for identity and hand-built tests.
    pub fn linear(weight: Matrix<T>, bias: Matrix<T>) -> Result<Self> {
        let m = Mlp {
            layers: vec![Dense { weight, bias }],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(LabError::Config("mlp has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(LabError::Dimension {
                    op: "mlp bias",
                    left: l.weight.shape(),
                    right: l.bias.shape(),
                });
            }
            if let Some(next) = self.layers.get(i + 1) {
                if next.weight.rows() != l.weight.cols() {
                    return Err(LabError::Dimension {
                        op: "mlp chain",
                        left: l.weight.shape(),
                        right: next.weight.shape(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    /// Widths of the hidden layers, i.e. the shapes dropout masks must take.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.cols())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> Vec<&Matrix<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Forward pass keeping intermediate activations.
    ///
    /// `dropout` holds one multiplicative mask per hidden layer, applied after
    /// the rectifier. The output layer never gets a nonlinearity.
    pub fn forward(
        &self,
        x: &Matrix<T>,
        dropout: Option<&[Matrix<T>]>,
    ) -> Result<ForwardTrace<T>> {
        if x.cols() != self.input_dim() {
            return Err(LabError::Dimension {
                op: "mlp_forward",
                left: x.shape(),
                right: self.layers[0].weight.shape(),
            });
        }
        if let Some(masks) = dropout {
            if masks.len() != self.layers.len() - 1 {
                return Err(LabError::Config(format!(
                    "expected {} dropout masks, got {}",
                    self.layers.len() - 1,
                    masks.len()
                )));
            }
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let pre = matmul(&current, &layer.weight)?.add_row_broadcast(&layer.bias)?;
            let next = if l == last {
                pre.clone()
            } else {
                let act = pre.map(|v| v.max(T::zero()));
                match dropout {
                    Some(masks) => act.hadamard(&masks[l])?,
                    None => act,
                }
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre_activations.push(pre);
        }
        Ok(ForwardTrace {
            inputs,
            pre_activations,
            masks: dropout.map(<[Matrix<T>]>::to_vec),
            output: current,
        })
    }

    pub fn features(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(x, None)?.output)
    }

    /// Backpropagates `d_output` (gradient of the loss w.r.t. the output)
    /// and returns parameter gradients shaped like `self`, plus the gradient
    /// w.r.t. the input batch.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        d_output: &Matrix<T>,
    ) -> Result<(Mlp<T>, Matrix<T>)> {
        if d_output.shape() != trace.output.shape() {
            return Err(LabError::Dimension {
                op: "mlp_backward",
                left: trace.output.shape(),
                right: d_output.shape(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = self.zeros_like();
        let mut delta = d_output.clone();
        for l in (0..self.layers.len()).rev() {
            if l != last {
                let pre = &trace.pre_activations[l];
                let mut d = delta;
                for (dv, &p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= T::zero() {
                        *dv = T::zero();
                    }
                }
                if let Some(masks) = &trace.masks {
                    d = d.hadamard(&masks[l])?;
                }
                delta = d;
            }
            grads.layers[l].weight = matmul_tn(&trace.inputs[l], &delta)?;
            grads.layers[l].bias = delta.sum_rows();
            delta = matmul_nt(&delta, &self.layers[l].weight)?;
        }
        Ok((grads, delta))
    }
}

/// Inverted-dropout masks for every hidden layer: entries are `0` with
/// probability `p` and `1/(1-p)` otherwise.
pub fn sample_dropout_masks<T: Scalar, R: Rng + ?Sized>(
    mlp: &Mlp<T>,
    batch: usize,
    p: f64,
    rng: &mut R,
) -> Vec<Matrix<T>> {
    let keep = T::of(1.0 / (1.0 - p));
    mlp.hidden_widths()
        .into_iter()
        .map(|w| {
            Matrix::from_fn(batch, w, |_, _| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
        })
        .collect()
}
