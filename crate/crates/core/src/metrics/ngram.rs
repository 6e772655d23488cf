use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// The most repeated contiguous n-gram of a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramProfile {
    pub n: usize,
    pub top_gram: Option<Vec<String>>,
    pub top_count: usize,
}

fn counts<S: Ord>(tokens: &[S], n: usize) -> BTreeMap<&[S], usize> {
    let mut map = BTreeMap::new();
    for gram in tokens.windows(n) {
        *map.entry(gram).or_insert(0) += 1;
    }
    map
}

/// Most frequent n-gram with overlapping occurrences counted. Ties go to the
/// lexicographically smallest gram.
pub fn top_ngram<S: AsRef<str> + Ord>(tokens: &[S], n: usize) -> Result<NgramProfile> {
    if n < 1 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    let mut best: Option<(&[S], usize)> = None;
    for (gram, count) in counts(tokens, n) {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((gram, count));
        }
    }
    Ok(match best {
        Some((gram, count)) => NgramProfile {
            n,
            top_gram: Some(gram.iter().map(|t| String::from(t.as_ref())).collect()),
            top_count: count,
        },
        None => NgramProfile {
            n,
            top_gram: None,
            top_count: 0,
        },
    })
}

/// Count of the most frequent n-gram; 0 when there are fewer than `n` tokens.
pub fn top_ngram_count<S: Ord>(tokens: &[S], n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    counts(tokens, n).into_values().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn short_sequences_have_no_grams() {
        let p = top_ngram(&["a", "b", "c"], 4).unwrap();
        assert_eq!(p.top_count, 0);
        assert_eq!(p.top_gram, None);
    }

    #[test]
    fn overlapping_repeats() {
        let t = ["the", "cat", "sat", "on", "the", "cat", "sat", "on", "the"];
        let p = top_ngram(&t, 4).unwrap();
        assert_eq!(p.top_count, 2);
        // "cat sat on the" ties with "the cat sat on" and sorts first.
        assert_eq!(p.top_gram.unwrap(), vec!["cat", "sat", "on", "the"]);
        assert_eq!(top_ngram_count(&["a"; 6], 2), 5);
    }

    #[test]
    fn distinct_tokens_count_once() {
        assert_eq!(top_ngram(&["a", "b", "c", "d"], 4).unwrap().top_count, 1);
    }

    #[test]
    fn zero_order_is_an_error() {
        assert!(top_ngram(&["a"], 0).is_err());
    }

    fn brute_force(tokens: &[u8], n: usize) -> usize {
        let mut best = 0;
        for i in 0..tokens.len() {
            if i + n > tokens.len() {
                break;
            }
            let c = (0..=tokens.len() - n)
                .filter(|&j| tokens[j..j + n] == tokens[i..i + n])
                .count();
            best = best.max(c);
        }
        best
    }

    proptest! {
        #[test]
        fn matches_brute_force(tokens in proptest::collection::vec(0u8..4, 0..50), n in 1usize..6) {
            let words: Vec<String> = tokens.iter().map(|t| alloc::format!("w{t}")).collect();
            let p = top_ngram(&words, n).unwrap();
            prop_assert_eq!(p.top_count, brute_force(&tokens, n));
            prop_assert_eq!(p.top_count == 0, tokens.len() < n);
        }
    }
}
