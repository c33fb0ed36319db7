//! Log-domain helpers shared by every estimator.

use crate::error::{FusionError, Result};

/// Probability floor applied before any logarithm of a model probability.
pub const PROB_FLOOR: f64 = 1e-12;

/// `log(max(p, floor))`, rejecting `p` outside `[0, 1]`.
pub fn safe_log(p: f64, floor: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FusionError::Domain(p));
    }
    Ok(p.max(floor).ln())
}

/// Unchecked variant of [`safe_log`] with the default floor, for hot loops
/// over parameters that are already known to be probabilities.
#[inline]
pub(crate) fn ln_floor(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Normalizes a vector of log-weights into a probability vector using the
/// max-shift trick.
pub fn log_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    log_normalize_in_place(&mut out)?;
    Ok(out)
}

/// In-place [`log_normalize`]; returns the log of the normalizing constant.
pub fn log_normalize_in_place(v: &mut [f64]) -> Result<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(FusionError::Degenerate(
            "all log-weights are -inf".to_string(),
        ));
    }
    if max == f64::INFINITY {
        return Err(FusionError::Numeric("log-weight is +inf".to_string()));
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    Ok(max + sum.ln())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
