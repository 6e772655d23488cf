//! Reference implementations written straight from the textbook formulas.
//! Shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::HashMap;

fn counts<'a>(toks: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for i in 0..=toks.len() - n {
            *m.entry(toks[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU with exponential smoothing and effective order: product of
/// the modified precisions raised to 1/orders, times the brevity penalty.
pub fn bleu(hyp: &[&str], reference: &[&str]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut product = 1.0f64;
    let mut orders = 0u32;
    let mut failures = 0i32;
    for n in 1..=4 {
        let h = counts(hyp, n);
        let total: usize = h.values().sum();
        if total == 0 {
            continue;
        }
        let r = counts(reference, n);
        let clipped: usize = h.iter().map(|(g, c)| (*c).min(*r.get(g).unwrap_or(&0))).sum();
        let p = if clipped == 0 {
            failures += 1;
            1.0 / (2f64.powi(failures) * total as f64)
        } else {
            clipped as f64 / total as f64
        };
        product *= p;
        orders += 1;
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (100.0 * bp * product.powf(1.0 / orders as f64)).min(100.0)
}

/// Hand-picked pairs: exact matches, partial overlap, higher orders with no
/// match, hypotheses shorter than four tokens, brevity penalties, clipping.
pub fn bleu_suite() -> Vec<(Vec<&'static str>, Vec<&'static str>)> {
    let s = |t: &'static str| t.split(' ').collect::<Vec<_>>();
    [
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("the cat sat on the mat", "the cat is on the mat"),
        ("the cat", "the cat sat on the mat"),
        ("cat", "the cat sat on the mat"),
        ("the the the the the the", "the cat sat on the mat"),
        ("a b c d e f g h", "a b c d x f g h"),
        ("a b c", "a b c"),
        ("a b c", "a b d"),
        ("a b", "b a"),
        ("x y z w", "a b c d"),
        ("q", "q"),
        ("q", "r"),
        (
            "the quick brown fox jumps over the lazy dog",
            "the quick brown fox jumped over the lazy dog",
        ),
        ("jumps over the lazy dog", "the quick brown fox jumps over the lazy dog"),
        ("la la la la la la la la", "la vie est belle"),
        ("a b a b a b a b", "a b a b"),
        (
            "one two three four five",
            "one two three four five six seven eight nine ten",
        ),
        (
            "one two three four five six seven eight nine ten",
            "one two three four five",
        ),
        ("z one two three", "one two three four"),
        ("der Hund bellt laut", "der Hund bellt"),
        ("he said that he would come", "he said he would come tomorrow"),
        ("a a a b b b", "a b a b a b"),
        ("w1 w2 w3 w4 w5 w6 w7", "w1 w2 w9 w4 w5 w9 w7"),
        ("x x", "x"),
    ]
    .into_iter()
    .map(|(h, r)| (s(h), s(r)))
    .collect()
}

/// Lower nearest-rank quantile by counting: the smallest observed value `v`
/// with `#{x <= v} >= q * n`, compared in exact rational form when `q` is a
/// multiple of 1/10000.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as u64;
    let q4 = (q * 10_000.0).round() as u64;
    for cand in &v {
        let at_most = v.iter().filter(|x| *x <= cand).count() as u64;
        if at_most * 10_000 >= q4 * n {
            return *cand;
        }
    }
    unreachable!()
}

/// Candidate selection by brute force: every source must beat `quality_min`
/// for every model; rank by mean then id; keep `eligible / 5` (fraction 0.2).
pub fn candidates_fifth(ids: &[String], scores: &[Vec<f64>], quality_min: f64) -> Vec<String> {
    let mut eligible: Vec<(f64, &String)> = ids
        .iter()
        .enumerate()
        .filter(|(i, _)| scores.iter().all(|m| m[*i] > quality_min))
        .map(|(i, id)| (scores.iter().map(|m| m[i]).sum::<f64>() / scores.len() as f64, id))
        .collect();
    eligible.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    let keep = eligible.len() / 5;
    eligible.into_iter().take(keep).map(|(_, id)| id.clone()).collect()
}

/// Pearson r from raw sums: (nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²)).
pub fn pearson_closed(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    (den > 0.0).then(|| (n * sxy - sx * sy) / den)
}

/// Fixed vectors with their expected correlations, for the closed-form check.
pub fn pearson_suite() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![2.0, 4.0, 6.0, 8.0, 10.0]),
        (vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![5.0, 4.0, 3.0, 2.0, 1.0]),
        (vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 3.0, 2.0, 4.0]),
        (
            vec![0.86, 0.85, 0.80, 0.78, 0.70, 0.72],
            vec![0.0, 2.0, 1.0, 3.0, 5.0, 4.0],
        ),
        (
            vec![12.5, 30.0, 9.5, 44.0, 18.0, 27.0, 33.0],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        ),
        (vec![-3.0, 7.5, 0.25, 9.0, -1.0], vec![4.0, -2.0, 1.0, 0.5, 3.0]),
        (vec![1e-3, 2e-3, 4e-3, 8e-3], vec![1e3, 3e3, 2e3, 9e3]),
        (vec![100.0, 101.0, 102.0], vec![0.5, 0.4, 0.45]),
    ]
}
