use alloc::collections::BTreeMap;

use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

fn ngram_counts<S: Ord>(tokens: &[S], n: usize) -> BTreeMap<&[S], usize> {
    let mut map = BTreeMap::new();
    for gram in tokens.windows(n) {
        *map.entry(gram).or_insert(0usize) += 1;
    }
    map
}

/// Sentence-level BLEU on a 0-100 scale with effective order and exponential
/// smoothing over orders 1 to 4.
///
/// Orders whose hypothesis n-gram count is zero are left out of the geometric
/// mean. Each order with candidates but no clipped matches doubles a running
/// smoothing multiplier `k` and contributes `1 / (k * candidates)` instead of
/// zero. Short hypotheses pay the usual `exp(1 - |ref| / |hyp|)` penalty.
pub fn spbleu<S: Ord>(hyp: &[S], reference: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("spBLEU reference is empty".into()));
    }
    if hyp.is_empty() {
        return Ok(0.0);
    }

    let mut smooth = 1.0;
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=MAX_ORDER {
        if hyp.len() < n {
            break;
        }
        let candidates = (hyp.len() + 1 - n) as f64;
        let ref_counts = ngram_counts(reference, n);
        let matches: usize = ngram_counts(hyp, n)
            .into_iter()
            .map(|(gram, c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matches == 0 {
            smooth *= 2.0;
            1.0 / (smooth * candidates)
        } else {
            matches as f64 / candidates
        };
        log_sum += libm::log(precision);
        orders += 1;
    }

    let brevity = if hyp.len() < reference.len() {
        libm::exp(1.0 - reference.len() as f64 / hyp.len() as f64)
    } else {
        1.0
    };
    Ok((100.0 * brevity * libm::exp(log_sum / orders as f64)).min(100.0))
}
