use super::tensor::{dot, matmul, Matrix};
use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Largest `min(rows, cols)` accepted by [`svd_small`].
pub const SVD_MAX_RANK: usize = 512;
const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `m = U · diag(sigma) · Vᵀ`.
///
/// For an `r × c` input with `k = min(r, c)`, `u` is `r × k`, `v` is `c × k`
/// and `sigma` is non-increasing. Columns belonging to zero singular values
/// are completed to an orthonormal set.
#[derive(Clone, Debug)]
pub struct SvdResult<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn reconstruct(&self) -> Result<Matrix<T>> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] = us[(i, j)] * *s;
            }
        }
        matmul(&us, &self.v.transpose())
    }
}

/// One-sided Jacobi SVD.
pub fn svd_small<T: Scalar>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    let (rows, cols) = m.shape();
    if rows.min(cols) > SVD_MAX_RANK {
        return Err(LabError::Config(format!(
            "svd_small supports min(rows, cols) <= {SVD_MAX_RANK}, got {rows}x{cols}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(LabError::Config("svd of an empty matrix".into()));
    }
    if rows < cols {
        let t = svd_small(&m.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    // rows >= cols. Work on the columns of m, stored as rows of `w`.
    let n = cols;
    let mut w = m.transpose();
    let mut v = Matrix::<T>::identity(n);
    let tol = T::epsilon() * T::of(rows as f64);
    let negligible = (T::epsilon() * m.frobenius()).powi(2);

    let mut converged = false;
    let mut residual = T::zero();
    for _ in 0..MAX_SWEEPS {
        residual = T::zero();
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LabError::Numeric(format!(
            "one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps; off-diagonal residual {residual}"
        )));
    }

    let mut order: Vec<(usize, T)> = (0..n).map(|j| (j, dot(w.row(j), w.row(j)).sqrt())).collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite norms"));

    let scale = order.first().map_or(T::zero(), |o| o.1);
    let cutoff = scale * T::epsilon() * T::of((rows * n) as f64);

    let mut u = Matrix::<T>::zeros(rows, n);
    let mut vout = Matrix::<T>::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut filled = Vec::with_capacity(n);
    for (k, &(j, s)) in order.iter().enumerate() {
        for i in 0..n {
            vout[(i, k)] = v[(j, i)];
        }
        if s > cutoff {
            for i in 0..rows {
                u[(i, k)] = w[(j, i)] / s;
            }
            sigma.push(s);
            filled.push(true);
        } else {
            sigma.push(T::zero());
            filled.push(false);
        }
    }
    complete_orthonormal(&mut u, &filled);
    Ok(SvdResult { u, sigma, v: vout })
}

fn rotate_rows<T: Scalar>(m: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.cols() {
        let a = m[(p, k)];
        let b = m[(q, k)];
        m[(p, k)] = c * a - s * b;
        m[(q, k)] = s * a + c * b;
    }
}

/// Fills the columns of `u` not marked in `filled` with unit vectors
/// orthogonal to every other column (Gram-Schmidt against the standard basis).
fn complete_orthonormal<T: Scalar>(u: &mut Matrix<T>, filled: &[bool]) {
    let rows = u.rows();
    let mut basis: Vec<Vec<T>> = filled
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(k, _)| u.column(k))
        .collect();
    let mut candidate = 0;
    for (k, &f) in filled.iter().enumerate() {
        if f {
            continue;
        }
        while candidate < rows {
            let mut e = vec![T::zero(); rows];
            e[candidate] = T::one();
            candidate += 1;
            // two passes of classical Gram-Schmidt for stability
            for _ in 0..2 {
                for b in &basis {
                    let proj = dot(&e, b);
                    for (x, &bi) in e.iter_mut().zip(b) {
                        *x = *x - proj * bi;
                    }
                }
            }
            let n = dot(&e, &e).sqrt();
            if n > T::of(1e-3) {
                for x in e.iter_mut() {
                    *x = *x / n;
                }
                for i in 0..rows {
                    u[(i, k)] = e[i];
                }
                basis.push(e);
                break;
            }
        }
    }
}

/// Projects mean-centred rows onto the two leading right singular vectors.
pub fn pca_2d<T: Scalar>(x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.rows() < 2 {
        return Err(LabError::Config("pca_2d needs at least two rows".into()));
    }
    let mean = x.mean_rows();
    let centered = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mean[(0, j)]);
    let noise_floor = T::epsilon() * x.max_abs() * T::of(x.rows() as f64);
    if centered.max_abs() <= noise_floor {
        return Ok(Matrix::zeros(x.rows(), 2));
    }
    let svd = svd_small(&centered)?;
    let k = svd.v.cols().min(2);
    Ok(Matrix::from_fn(x.rows(), 2, |i, c| {
        if c < k {
            (0..x.cols())
                .map(|j| centered[(i, j)] * svd.v[(j, c)])
                .sum()
        } else {
            T::zero()
        }
    }))
}
