use super::tensor::{dot, norm, Matrix};
use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Row-wise log-softmax with max-shift.
pub fn log_softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    out
}

pub fn softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    log_softmax(logits).map(|v| v.exp())
}

/// Mean cross-entropy of `softmax(logits)` against `labels`, with the
/// gradient w.r.t. the logits: `(softmax - onehot) / batch`.
pub fn softmax_xent<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    if labels.len() != logits.rows() {
        return Err(LabError::Dimension {
            op: "softmax_xent",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(LabError::Label {
            label: bad,
            classes,
        });
    }
    let batch = T::of(labels.len().max(1) as f64);
    let logp = log_softmax(logits);
    let mut loss = T::zero();
    let mut grad = logp.map(|v| v.exp());
    for (i, &y) in labels.iter().enumerate() {
        loss = loss - logp[(i, y)];
        grad[(i, y)] = grad[(i, y)] - T::one();
    }
    Ok((loss / batch, grad.map(|v| v / batch)))
}

fn checked_norms<T: Scalar>(a: &[T], b: &[T]) -> Result<(T, T)> {
    if a.len() != b.len() {
        return Err(LabError::Dimension {
            op: "cosine_similarity",
            left: (1, a.len()),
            right: (1, b.len()),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() {
        return Err(LabError::DegenerateFeature { sample: 0 });
    }
    if nb == T::zero() {
        return Err(LabError::DegenerateFeature { sample: 0 });
    }
    Ok((na, nb))
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let (na, nb) = checked_norms(a, b)?;
    let k = dot(a, b) / (na * nb);
    Ok(k.max(-T::one()).min(T::one()))
}

/// Result of [`abs_cosine_grad`].
#[derive(Clone, Debug, PartialEq)]
pub struct AbsCosine<T> {
    pub loss: T,
    pub da: Vec<T>,
    pub db: Vec<T>,
}

/// `|K(a, b)|` and its gradient. At `K = 0` the subgradient is taken as 0.
pub fn abs_cosine_grad<T: Scalar>(a: &[T], b: &[T]) -> Result<AbsCosine<T>> {
    let (na, nb) = checked_norms(a, b)?;
    let k = dot(a, b) / (na * nb);
    let sign = if k > T::zero() {
        T::one()
    } else if k < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    let inv = T::one() / (na * nb);
    let ka = k / (na * na);
    let kb = k / (nb * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| sign * (bi * inv - ka * ai))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| sign * (ai * inv - kb * bi))
        .collect();
    Ok(AbsCosine {
        loss: k.abs().min(T::one()),
        da,
        db,
    })
}
