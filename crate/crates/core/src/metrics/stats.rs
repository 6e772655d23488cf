use alloc::vec::Vec;

use crate::{Error, Result};

/// Pearson correlation, or `Undefined` when a series has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(r) => Some(r),
            Correlation::Undefined => None,
        }
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Median taking the lower-middle element for even lengths.
pub fn median_lower(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "pearson series lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least 2 points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("pearson input is not finite".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Ok(Correlation::Undefined);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0)))
}

/// `q * n`, snapped to the nearest integer when it is within floating-point
/// noise of one (so 0.07 * 100 ranks as 7, not 7.000000000000001).
pub fn snap_product(q: f64, n: usize) -> f64 {
    let x = q * n as f64;
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * r.max(1.0) {
        r
    } else {
        x
    }
}

/// Zero-based index of the lower nearest-rank `q` quantile among `n` sorted
/// values: `ceil(q * n) - 1`, clamped to `[0, n - 1]`.
pub fn nearest_rank_index(n: usize, q: f64) -> usize {
    debug_assert!(n > 0);
    let rank = libm::ceil(snap_product(q, n)) as usize;
    rank.saturating_sub(1).min(n - 1)
}

fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!(
            "quantile level {q} outside [0, 1]"
        )))
    }
}

/// Quantile of an already ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    check_q(q)?;
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sequence".into()));
    }
    Ok(sorted[nearest_rank_index(sorted.len(), q)])
}

/// Lower nearest-rank empirical quantile. Always returns an observed value.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("quantile input contains NaN".into()));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}
