use crate::error::{LabError, Result};

/// Outcome of a central-difference comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` against `(f(p + eps·e_k) - f(p - eps·e_k)) / 2eps`
/// for every coordinate `k`. The per-coordinate relative error uses the
/// denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(
    mut loss_fn: F,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(LabError::Dimension {
            op: "finite_diff_check",
            left: (params.len(), 1),
            right: (analytic.len(), 1),
        });
    }
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(LabError::Config(format!(
            "finite-difference step {eps} outside the supported range"
        )));
    }
    let mut probe = params.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
    };
    for k in 0..params.len() {
        let orig = probe[k];
        probe[k] = orig + eps;
        let up = loss_fn(&probe)?;
        probe[k] = orig - eps;
        let down = loss_fn(&probe)?;
        probe[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(LabError::Numeric(format!(
                "non-finite loss while perturbing coordinate {k}"
            )));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[k];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        let rel = (a - numeric).abs() / denom;
        if rel > worst.max_rel_error {
            worst = GradCheck {
                max_rel_error: rel,
                worst_index: k,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(worst)
}
