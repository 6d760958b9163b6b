use serde::{Deserialize, Serialize};

use super::model::PoemModel;
use crate::error::{LabError, Result};
use crate::nncore::{abs_cosine_grad, matmul, matmul_nt, matmul_tn, softmax_xent, ForwardTrace, Matrix, Mlp};
use crate::scalar::Scalar;

/// Mini-batch with one label vector per task.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub x: Matrix<T>,
    /// `labels[i]` are the targets of task `i` (categories for task 0,
    /// source-domain indices for task 1).
    pub labels: Vec<Vec<usize>>,
    /// Dataset sample ids, for leakage audits.
    pub ids: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn validate_for(&self, model: &PoemModel<T>) -> Result<()> {
        if self.labels.len() < model.task_count() {
            return Err(LabError::Config(format!(
                "batch carries labels for {} tasks, model has {}",
                self.labels.len(),
                model.task_count()
            )));
        }
        if self.x.cols() != model.input_dim() {
            return Err(LabError::Dimension {
                op: "batch input",
                left: (self.x.rows(), model.input_dim()),
                right: self.x.shape(),
            });
        }
        for (task, labels) in self.labels.iter().take(model.task_count()).enumerate() {
            if labels.len() != self.len() {
                return Err(LabError::Dimension {
                    op: "batch labels",
                    left: self.x.shape(),
                    right: (labels.len(), 1),
                });
            }
            let classes = model.label_counts[task];
            if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
                return Err(LabError::Label { label: bad, classes });
            }
        }
        Ok(())
    }

    /// Same samples, rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Batch {
            x: self.x.select_rows(perm),
            labels: self
                .labels
                .iter()
                .map(|l| perm.iter().map(|&p| l[p]).collect())
                .collect(),
            ids: perm.iter().map(|&p| self.ids[p]).collect(),
        }
    }
}

/// Which auxiliary terms enter the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossTerms {
    pub disentangle: bool,
    pub discriminate: bool,
    /// Reverse the discrimination gradient flowing into the embeddings.
    /// The discriminator itself always minimises its loss.
    pub adversarial: bool,
}

impl LossTerms {
    pub const FULL: LossTerms = LossTerms {
        disentangle: true,
        discriminate: true,
        adversarial: false,
    };
    pub const CLASSIFICATION_ONLY: LossTerms = LossTerms {
        disentangle: false,
        discriminate: false,
        adversarial: false,
    };
}

/// Every component of the objective, measured whether or not it is active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossBreakdown<T> {
    /// Per-task classification losses.
    pub l_c: Vec<T>,
    /// `l_s[i][j]` for ordered pairs; the diagonal is zero.
    pub l_s: Vec<Vec<T>>,
    /// Per-task discrimination losses.
    pub l_d: Vec<T>,
    pub terms: LossTerms,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn task_count(&self) -> usize {
        self.l_c.len()
    }

    pub fn sum_l_c(&self) -> T {
        self.l_c.iter().copied().sum()
    }

    pub fn sum_l_d(&self) -> T {
        self.l_d.iter().copied().sum()
    }

    /// Sum over ordered pairs `i != j`.
    pub fn sum_l_s(&self) -> T {
        self.l_s
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |(j, _)| *j != i)
                    .map(|(_, &v)| v)
            })
            .sum()
    }

    /// Objective rebuilt from the stored parts:
    /// `(1/N)(Σ l_c + Σ l_d + Σ_{i≠j} l_s)` over the active terms.
    pub fn recompute_total(&self) -> T {
        let n = T::of(self.task_count() as f64);
        let mut acc = self.sum_l_c();
        if self.terms.discriminate {
            acc = acc + self.sum_l_d();
        }
        if self.terms.disentangle {
            acc = acc + self.sum_l_s();
        }
        acc / n
    }
}

#[derive(Clone, Debug)]
pub struct ClassificationGrads<T> {
    pub embedding: Mlp<T>,
    pub classifier: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct DisentangleGrads<T> {
    pub embedding_i: Mlp<T>,
    pub embedding_j: Mlp<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminationGrads<T> {
    pub embedding: Mlp<T>,
    pub discriminator: Matrix<T>,
}

/// Cross-entropy of `features · head` and its gradients w.r.t. the features
/// and the head.
fn head_xent<T: Scalar>(
    features: &Matrix<T>,
    head: &Matrix<T>,
    labels: &[usize],
) -> Result<(T, Matrix<T>, Matrix<T>)> {
    let logits = matmul(features, head)?;
    let (loss, dlogits) = softmax_xent(&logits, labels)?;
    let d_head = matmul_tn(features, &dlogits)?;
    let d_features = matmul_nt(&dlogits, head)?;
    Ok((loss, d_features, d_head))
}

/// Mean over rows of `|K(a_b, b_b)|` with per-row gradients scaled by `1/B`.
fn pairwise_abs_cosine<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
) -> Result<(T, Matrix<T>, Matrix<T>)> {
    let rows = a.rows();
    let inv = T::one() / T::of(rows.max(1) as f64);
    let mut da = Matrix::zeros(rows, a.cols());
    let mut db = Matrix::zeros(rows, b.cols());
    let mut loss = T::zero();
    for s in 0..rows {
        let g = abs_cosine_grad(a.row(s), b.row(s)).map_err(|e| match e {
            LabError::DegenerateFeature { .. } => LabError::DegenerateFeature { sample: s },
            other => other,
        })?;
        loss = loss + g.loss;
        for (d, v) in da.row_mut(s).iter_mut().zip(g.da) {
            *d = v * inv;
        }
        for (d, v) in db.row_mut(s).iter_mut().zip(g.db) {
            *d = v * inv;
        }
    }
    Ok((loss * inv, da, db))
}

/// Cross-entropy of task `task`'s own classifier on its embedding.
pub fn classification_loss<T: Scalar>(
    model: &PoemModel<T>,
    task: usize,
    batch: &Batch<T>,
) -> Result<(T, ClassificationGrads<T>)> {
    model.check_task(task)?;
    let labels = batch
        .labels
        .get(task)
        .ok_or_else(|| LabError::Config(format!("batch has no labels for task {task}")))?;
    let emb = &model.embeddings[task];
    let trace = emb.forward(&batch.x, None)?;
    let (loss, d_features, d_head) = head_xent(&trace.output, &model.classifiers[task], labels)?;
    let (embedding, _) = emb.backward(&trace, &d_features)?;
    Ok((
        loss,
        ClassificationGrads {
            embedding,
            classifier: d_head,
        },
    ))
}

/// Batch mean of per-sample `|cos|` between embeddings `i` and `j`.
pub fn disentangling_loss<T: Scalar>(
    model: &PoemModel<T>,
    i: usize,
    j: usize,
    batch: &Batch<T>,
) -> Result<(T, DisentangleGrads<T>)> {
    model.check_task(i)?;
    model.check_task(j)?;
    if i == j {
        return Err(LabError::Config(
            "disentangling loss needs two different embeddings".into(),
        ));
    }
    let ti = model.embeddings[i].forward(&batch.x, None)?;
    let tj = model.embeddings[j].forward(&batch.x, None)?;
    let (loss, di, dj) = pairwise_abs_cosine(&ti.output, &tj.output)?;
    let (embedding_i, _) = model.embeddings[i].backward(&ti, &di)?;
    let (embedding_j, _) = model.embeddings[j].backward(&tj, &dj)?;
    Ok((
        loss,
        DisentangleGrads {
            embedding_i,
            embedding_j,
        },
    ))
}

/// Cross-entropy of the discriminator recognising embedding `task` as its
/// own index. Gradients reach both the discriminator and the embedding.
pub fn discrimination_loss<T: Scalar>(
    model: &PoemModel<T>,
    task: usize,
    batch: &Batch<T>,
) -> Result<(T, DiscriminationGrads<T>)> {
    model.check_task(task)?;
    let emb = &model.embeddings[task];
    let trace = emb.forward(&batch.x, None)?;
    let labels = vec![task; batch.len()];
    let (loss, d_features, d_head) = head_xent(&trace.output, &model.discriminator, &labels)?;
    let (embedding, _) = emb.backward(&trace, &d_features)?;
    Ok((
        loss,
        DiscriminationGrads {
            embedding,
            discriminator: d_head,
        },
    ))
}

/// Full objective with gradients for every parameter.
///
/// All components are always evaluated and reported; `terms` only decides
/// which of them enter `total` and the gradient. `dropout`, if given, holds
/// one mask list per task.
pub fn total_loss<T: Scalar>(
    model: &PoemModel<T>,
    batch: &Batch<T>,
    terms: LossTerms,
    dropout: Option<&[Vec<Matrix<T>>]>,
) -> Result<(LossBreakdown<T>, PoemModel<T>)> {
    batch.validate_for(model)?;
    let n = model.task_count();
    let scale = T::one() / T::of(n as f64);

    let traces: Vec<ForwardTrace<T>> = (0..n)
        .map(|i| {
            model.embeddings[i].forward(&batch.x, dropout.map(|d| d[i].as_slice()))
        })
        .collect::<Result<_>>()?;

    let mut grads = model.zeros_like();
    let mut d_features: Vec<Matrix<T>> = traces
        .iter()
        .map(|t| Matrix::zeros(t.output.rows(), t.output.cols()))
        .collect();

    let mut l_c = Vec::with_capacity(n);
    for i in 0..n {
        let (loss, df, dh) = head_xent(&traces[i].output, &model.classifiers[i], &batch.labels[i])?;
        l_c.push(loss);
        d_features[i].axpy(scale, &df)?;
        grads.classifiers[i] = dh.scale(scale);
    }

    let mut l_d = Vec::with_capacity(n);
    for i in 0..n {
        let labels = vec![i; batch.len()];
        let (loss, df, dh) = head_xent(&traces[i].output, &model.discriminator, &labels)?;
        l_d.push(loss);
        if terms.discriminate {
            let sign = if terms.adversarial { -scale } else { scale };
            d_features[i].axpy(sign, &df)?;
            grads.discriminator.axpy(scale, &dh)?;
        }
    }

    let mut l_s = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (loss, di, dj) = pairwise_abs_cosine(&traces[i].output, &traces[j].output)?;
            l_s[i][j] = loss;
            if terms.disentangle {
                d_features[i].axpy(scale, &di)?;
                d_features[j].axpy(scale, &dj)?;
            }
        }
    }

    for i in 0..n {
        let (g, _) = model.embeddings[i].backward(&traces[i], &d_features[i])?;
        grads.embeddings[i] = g;
    }

    let mut breakdown = LossBreakdown {
        l_c,
        l_s,
        l_d,
        terms,
        total: T::zero(),
    };
    breakdown.total = breakdown.recompute_total();
    if !breakdown.total.is_finite() {
        return Err(LabError::Numeric("non-finite total loss".into()));
    }
    Ok((breakdown, grads))
}

/// Loss values only, no gradients. Used for validation curves.
pub fn evaluate_losses<T: Scalar>(
    model: &PoemModel<T>,
    batch: &Batch<T>,
    terms: LossTerms,
) -> Result<LossBreakdown<T>> {
    Ok(total_loss(model, batch, terms, None)?.0)
}
