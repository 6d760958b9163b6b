use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::nncore::{matmul, Matrix, Mlp};
use crate::rng::stream_rng;
use crate::scalar::Scalar;

/// Index of the category-classifying embedding.
pub const CATEGORY_TASK: usize = 0;
/// Index of the domain-classifying embedding in the two-task configuration.
pub const DOMAIN_TASK: usize = 1;

// Each embedding and classifier draws from its own stream, so a task's
// initial parameters do not depend on how many other tasks the model has.
const EMBEDDING_STREAM: u64 = 0x100;
const CLASSIFIER_STREAM: u64 = 0x200;
const DISCRIMINATOR_STREAM: u64 = 0x300;

/// Architecture shared by every elementary embedding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

impl Architecture {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.feature_dim);
        w
    }
}

/// A set of elementary embeddings, one linear classifier per task and a
/// linear discriminator with one column per embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PoemModel<T> {
    pub embeddings: Vec<Mlp<T>>,
    /// `classifiers[i]` is `L × label_counts[i]`.
    pub classifiers: Vec<Matrix<T>>,
    /// `L × N`.
    pub discriminator: Matrix<T>,
    pub label_counts: Vec<usize>,
}

fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-limit..limit)))
}

impl<T: Scalar> PoemModel<T> {
    /// Fresh model with one task per entry of `label_counts`.
    pub fn init(arch: &Architecture, label_counts: &[usize], seed: u64) -> Result<Self> {
        let slots: Vec<usize> = (0..label_counts.len()).collect();
        Self::init_slots(arch, label_counts, &slots, seed)
    }

    /// One-task model whose embedding and classifier are initialised exactly
    /// like task `slot` of a multi-task model with the same seed.
    pub fn init_single(arch: &Architecture, label_count: usize, slot: usize, seed: u64) -> Result<Self> {
        Self::init_slots(arch, &[label_count], &[slot], seed)
    }

    fn init_slots(arch: &Architecture, label_counts: &[usize], slots: &[usize], seed: u64) -> Result<Self> {
        if label_counts.is_empty() || label_counts.iter().any(|&c| c < 2) {
            return Err(LabError::Config(format!(
                "every task needs at least two labels: {label_counts:?}"
            )));
        }
        let widths = arch.widths();
        let n = label_counts.len();
        let mut embeddings = Vec::with_capacity(n);
        let mut classifiers = Vec::with_capacity(n);
        for (&slot, &count) in slots.iter().zip(label_counts) {
            let mut rng = stream_rng(seed, EMBEDDING_STREAM + slot as u64);
            embeddings.push(Mlp::init(&widths, &mut rng)?);
            let mut rng = stream_rng(seed, CLASSIFIER_STREAM + slot as u64);
            classifiers.push(glorot(arch.feature_dim, count, &mut rng));
        }
        let mut rng = stream_rng(seed, DISCRIMINATOR_STREAM);
        let discriminator = glorot(arch.feature_dim, n, &mut rng);
        let model = PoemModel {
            embeddings,
            classifiers,
            discriminator,
            label_counts: label_counts.to_vec(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.label_counts.len();
        if n == 0 || self.embeddings.len() != n || self.classifiers.len() != n {
            return Err(LabError::Config(format!(
                "model has {} embeddings, {} classifiers and {} tasks",
                self.embeddings.len(),
                self.classifiers.len(),
                n
            )));
        }
        let l = self.feature_dim();
        for (i, (emb, cls)) in self.embeddings.iter().zip(&self.classifiers).enumerate() {
            emb.validate()?;
            if emb.output_dim() != l || emb.input_dim() != self.input_dim() {
                return Err(LabError::Dimension {
                    op: "embedding widths",
                    left: (self.input_dim(), l),
                    right: (emb.input_dim(), emb.output_dim()),
                });
            }
            if cls.shape() != (l, self.label_counts[i]) {
                return Err(LabError::Dimension {
                    op: "task classifier",
                    left: (l, self.label_counts[i]),
                    right: cls.shape(),
                });
            }
        }
        if self.discriminator.shape() != (l, n) {
            return Err(LabError::Dimension {
                op: "discriminator",
                left: (l, n),
                right: self.discriminator.shape(),
            });
        }
        Ok(())
    }

    pub fn task_count(&self) -> usize {
        self.label_counts.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.embeddings[0].output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.embeddings[0].input_dim()
    }

    pub fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.task_count() {
            return Err(LabError::Index {
                what: "task",
                index: task,
                len: self.task_count(),
            });
        }
        Ok(())
    }

    /// Features of elementary embedding `task` for every row of `x`.
    pub fn embed(&self, task: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_task(task)?;
        self.embeddings[task].features(x)
    }

    /// Same structure with every parameter zero; doubles as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        PoemModel {
            embeddings: self.embeddings.iter().map(Mlp::zeros_like).collect(),
            classifiers: self
                .classifiers
                .iter()
                .map(|c| Matrix::zeros(c.rows(), c.cols()))
                .collect(),
            discriminator: Matrix::zeros(self.discriminator.rows(), self.discriminator.cols()),
            label_counts: self.label_counts.clone(),
        }
    }

    /// Every parameter tensor in a fixed order: embeddings, classifiers,
    /// discriminator.
    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut out: Vec<&Matrix<T>> = self.embeddings.iter().flat_map(Mlp::params).collect();
        out.extend(self.classifiers.iter());
        out.push(&self.discriminator);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out: Vec<&mut Matrix<T>> = self
            .embeddings
            .iter_mut()
            .flat_map(Mlp::params_mut)
            .collect();
        out.extend(self.classifiers.iter_mut());
        out.push(&mut self.discriminator);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    /// Category labels through the full model.
    pub fn predict_category(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        predict_category(
            &self.embeddings[CATEGORY_TASK],
            &self.classifiers[CATEGORY_TASK],
            x,
        )
    }

    /// The parts kept for inference: `(θ_z, Φ_z)` with `z` the category task.
    pub fn extract_category_model(&self) -> CategoryModel<T> {
        CategoryModel {
            embedding: self.embeddings[CATEGORY_TASK].clone(),
            classifier: self.classifiers[CATEGORY_TASK].clone(),
        }
    }

    /// Embedding and classifier of any task, e.g. the domain task for
    /// source-domain accuracy.
    pub fn task_model(&self, task: usize) -> Result<CategoryModel<T>> {
        self.check_task(task)?;
        Ok(CategoryModel {
            embedding: self.embeddings[task].clone(),
            classifier: self.classifiers[task].clone(),
        })
    }
}

/// An embedding with its linear classifier; all that inference needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CategoryModel<T> {
    pub embedding: Mlp<T>,
    pub classifier: Matrix<T>,
}

impl<T: Scalar> CategoryModel<T> {
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        predict_category(&self.embedding, &self.classifier, x)
    }

    pub fn logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        matmul(&self.embedding.features(x)?, &self.classifier)
    }

    pub fn param_count(&self) -> usize {
        self.embedding.param_count() + self.classifier.len()
    }

    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut out = self.embedding.params();
        out.push(&self.classifier);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = self.embedding.params_mut();
        out.push(&mut self.classifier);
        out
    }
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows<T: Scalar>(m: &Matrix<T>) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn predict_category<T: Scalar>(
    embedding: &Mlp<T>,
    classifier: &Matrix<T>,
    x: &Matrix<T>,
) -> Result<Vec<usize>> {
    let logits = matmul(&embedding.features(x)?, classifier)?;
    Ok(argmax_rows(&logits))
}

/// Concatenates parameter tensors into one flat vector.
pub fn flatten<T: Scalar>(params: &[&Matrix<T>]) -> Vec<T> {
    params
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect()
}

/// Inverse of [`flatten`].
pub fn assign_flat<T: Scalar>(params: Vec<&mut Matrix<T>>, flat: &[T]) -> Result<()> {
    let total: usize = params.iter().map(|m| m.len()).sum();
    if total != flat.len() {
        return Err(LabError::Dimension {
            op: "assign_flat",
            left: (total, 1),
            right: (flat.len(), 1),
        });
    }
    let mut offset = 0;
    for m in params {
        let n = m.len();
        m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    Ok(())
}
