//! Minimal source-side perturbations: keyboard misspellings, insertion of a
//! frequent token at the start of the sentence, and random title-casing.
//!
//! Every operator is a pure function of its input text and the seed carried
//! by the [`PerturbationSpec`]. Corpus-level perturbation derives a per-record
//! seed from the global seed and the record's source key, so records can be
//! processed in any order or in parallel with identical results.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::Tokenizer;
use crate::record::{PerturbationKind, PerturbationLineage, ScoreMap, TranslationRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    #[serde(default = "default_misspell_prob")]
    pub misspell_prob: f64,
    #[serde(default = "default_capitalize_prob")]
    pub capitalize_prob: f64,
    #[serde(default = "default_pool_size")]
    pub insert_pool_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_misspell_prob() -> f64 {
    0.01
}

fn default_capitalize_prob() -> f64 {
    0.1
}

fn default_pool_size() -> usize {
    50
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        Self {
            kind,
            misspell_prob: default_misspell_prob(),
            capitalize_prob: default_capitalize_prob(),
            insert_pool_size: default_pool_size(),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("misspell_prob", self.misspell_prob),
            ("capitalize_prob", self.capitalize_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.insert_pool_size < 1 {
            return Err(Error::InvalidArgument("insert_pool_size must be at least 1".into()));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Stable 64-bit seed for one record: FNV-1a over the global seed and key,
/// followed by a splitmix64 finalizer.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// The most frequent tokens of a test set, most frequent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyPool {
    entries: Vec<(String, usize)>,
    requested: usize,
}

impl FrequencyPool {
    pub fn from_entries(entries: Vec<(String, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyPool);
        }
        let requested = entries.len();
        Ok(Self { entries, requested })
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when the vocabulary was smaller than the requested pool size.
    pub fn is_clamped(&self) -> bool {
        self.entries.len() < self.requested
    }
}

/// Top-`k` source tokens by count, ties broken lexicographically.
pub fn build_frequency_pool(
    records: &[TranslationRecord],
    tokenizer: &dyn Tokenizer,
    k: usize,
) -> Result<FrequencyPool> {
    if k < 1 {
        return Err(Error::InvalidArgument("frequency pool size must be at least 1".into()));
    }
    let first = records.first().ok_or(Error::EmptyCorpus)?;
    let lang = first.lp.source_lang();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        if r.lp.source_lang() != lang {
            return Err(Error::InvalidArgument(format!(
                "frequency pool mixes source languages {lang:?} and {:?}",
                r.lp.source_lang()
            )));
        }
        for tok in tokenizer.tokenize(&r.source_text).into_inner() {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order is already lexicographic; a stable sort keeps it for ties.
    ranked.sort_by_key(|e| core::cmp::Reverse(e.1));
    ranked.truncate(k);
    if ranked.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(FrequencyPool {
        entries: ranked,
        requested: k,
    })
}

fn qwerty_neighbors(c: char) -> &'static str {
    match c {
        'q' => "was",
        'w' => "qeasd",
        'e' => "wrsdf",
        'r' => "etdfg",
        't' => "ryfgh",
        'y' => "tughj",
        'u' => "yihjk",
        'i' => "uojkl",
        'o' => "ipkl",
        'p' => "ol",
        'a' => "qwszx",
        's' => "qweadzxc",
        'd' => "wersfxcv",
        'f' => "ertdgcvb",
        'g' => "rtyfhvbn",
        'h' => "tyugjbnm",
        'j' => "yuihknm",
        'k' => "uiojlm",
        'l' => "iopk",
        'z' => "asx",
        'x' => "zsdca",
        'c' => "xdfv",
        'v' => "cfgb",
        'b' => "vghn",
        'n' => "bhjm",
        'm' => "njk",
        _ => "",
    }
}

fn same_case(a: char, b: char) -> bool {
    a.is_uppercase() == b.is_uppercase() && a.is_lowercase() == b.is_lowercase()
}

/// Replacement for one letter: a QWERTY neighbour for ASCII letters, otherwise
/// another letter of the same case from the same 128-codepoint block.
fn substitute(c: char, rng: &mut impl Rng) -> char {
    if c.is_ascii_alphabetic() {
        let neighbors = qwerty_neighbors(c.to_ascii_lowercase()).as_bytes();
        let pick = char::from(neighbors[rng.random_range(0..neighbors.len())]);
        return if c.is_ascii_uppercase() {
            pick.to_ascii_uppercase()
        } else {
            pick
        };
    }
    let base = u32::from(c) & !0x7f;
    let pool: Vec<char> = (base..base + 0x80)
        .filter_map(char::from_u32)
        .filter(|&d| d != c && d.is_alphabetic() && same_case(c, d))
        .collect();
    if pool.is_empty() {
        c
    } else {
        pool[rng.random_range(0..pool.len())]
    }
}

/// Replaces each alphabetic character independently with probability
/// `misspell_prob`. Length in characters and letter case are preserved.
pub fn perturb_misspell(text: &str, spec: &PerturbationSpec) -> Result<String> {
    spec.validate()?;
    let mut rng = spec.rng();
    Ok(text
        .chars()
        .map(|c| {
            if c.is_alphabetic() && rng.random_bool(spec.misspell_prob) {
                substitute(c, &mut rng)
            } else {
                c
            }
        })
        .collect())
}

/// Prepends one token drawn uniformly from the pool.
pub fn perturb_insert(text: &str, pool: &FrequencyPool, spec: &PerturbationSpec) -> Result<String> {
    spec.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut rng = spec.rng();
    let token = &pool.entries[rng.random_range(0..pool.len())].0;
    Ok(if text.is_empty() {
        token.clone()
    } else {
        format!("{token} {text}")
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capitalized {
    pub text: String,
    /// Words whose rendering changed. Zero means no word was eligible.
    pub changed_words: usize,
}

impl Capitalized {
    pub fn is_ineligible(&self) -> bool {
        self.changed_words == 0
    }
}

/// Case change restricted to one-to-one mappings that keep the lowercase
/// form, so only letter case ever changes.
fn recase(c: char, upper: bool) -> char {
    let mut mapped: Vec<char> = if upper {
        c.to_uppercase().collect()
    } else {
        c.to_lowercase().collect()
    };
    match (mapped.pop(), mapped.is_empty()) {
        (Some(d), true) if d.to_lowercase().eq(c.to_lowercase()) => d,
        _ => c,
    }
}

/// First alphabetic character uppercased, every later character lowercased.
pub fn title_case(word: &str) -> String {
    let mut seen_alpha = false;
    word.chars()
        .map(|c| {
            if seen_alpha {
                recase(c, false)
            } else if c.is_alphabetic() {
                seen_alpha = true;
                recase(c, true)
            } else {
                c
            }
        })
        .collect()
}

/// Title-cases each whitespace-delimited word with probability
/// `capitalize_prob`, forcing one uniformly chosen eligible word when the
/// random pass changed nothing.
pub fn perturb_capitalize(text: &str, spec: &PerturbationSpec) -> Result<Capitalized> {
    spec.validate()?;
    let mut rng = spec.rng();

    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }

    let titled: Vec<String> = spans.iter().map(|&(s, e)| title_case(&text[s..e])).collect();
    let eligible: Vec<usize> = spans
        .iter()
        .zip(&titled)
        .enumerate()
        .filter(|(_, (&(s, e), t))| text[s..e] != **t)
        .map(|(i, _)| i)
        .collect();

    let mut change = alloc::vec![false; spans.len()];
    for (i, flag) in change.iter_mut().enumerate() {
        let draw = rng.random_bool(spec.capitalize_prob);
        *flag = draw && eligible.contains(&i);
    }
    if !change.iter().any(|c| *c) && !eligible.is_empty() {
        change[eligible[rng.random_range(0..eligible.len())]] = true;
    }

    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut changed_words = 0;
    for (i, &(s, e)) in spans.iter().enumerate() {
        out.push_str(&text[last..s]);
        if change[i] {
            out.push_str(&titled[i]);
            changed_words += 1;
        } else {
            out.push_str(&text[s..e]);
        }
        last = e;
    }
    out.push_str(&text[last..]);
    Ok(Capitalized {
        text: out,
        changed_words,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedCorpus {
    pub records: Vec<TranslationRecord>,
    /// Capitalization runs: parents with no word whose casing could change.
    pub unchanged: Vec<String>,
}

/// One perturbed record per input record, with lineage and a fresh id
/// `<parent>.<kind>`. Translation, reference and scores are cleared.
pub fn perturb_corpus(
    records: &[TranslationRecord],
    spec: &PerturbationSpec,
    pool: Option<&FrequencyPool>,
) -> Result<PerturbedCorpus> {
    spec.validate()?;
    if spec.kind == PerturbationKind::Insert && pool.is_none_or(FrequencyPool::is_empty) {
        return Err(Error::EmptyPool);
    }
    let mut ids = BTreeSet::new();
    let mut out = Vec::with_capacity(records.len());
    let mut unchanged = Vec::new();
    for r in records {
        if r.perturbation.is_some() {
            return Err(Error::AlreadyPerturbed(r.id.clone()));
        }
        let seed = derive_seed(spec.seed, r.source_key());
        let local = spec.with_seed(seed);
        let text = match spec.kind {
            PerturbationKind::Misspell => perturb_misspell(&r.source_text, &local)?,
            PerturbationKind::Insert => perturb_insert(&r.source_text, pool.ok_or(Error::EmptyPool)?, &local)?,
            PerturbationKind::Capitalize => {
                let cap = perturb_capitalize(&r.source_text, &local)?;
                if cap.is_ineligible() {
                    unchanged.push(r.id.clone());
                }
                cap.text
            }
        };
        let id = format!("{}.{}", r.id, spec.kind);
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        out.push(TranslationRecord {
            id,
            source_id: Some(r.source_key().to_string()),
            lp: r.lp.clone(),
            model_id: r.model_id.clone(),
            source_text: text,
            translation_text: String::new(),
            reference_text: None,
            scores: ScoreMap::default(),
            perturbation: Some(PerturbationLineage {
                parent_id: r.id.clone(),
                kind: spec.kind,
                seed,
            }),
        });
    }
    Ok(PerturbedCorpus {
        records: out,
        unchanged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::WhitespacePunct;
    use crate::LanguagePair;
    use proptest::prelude::*;

    fn spec(kind: PerturbationKind, seed: u64) -> PerturbationSpec {
        PerturbationSpec::new(kind, seed)
    }

    fn rec(id: &str, src: &str) -> TranslationRecord {
        TranslationRecord::new(id, "en-de".parse::<LanguagePair>().unwrap(), "m", src, "x")
    }

    #[test]
    fn frequency_pool_counts_and_ties() {
        let mut text = String::new();
        for _ in 0..40 {
            text.push_str("the ");
        }
        for _ in 0..35 {
            text.push_str("x, ");
        }
        let recs = [rec("a", &text), rec("b", "dog cat dog")];
        let pool = build_frequency_pool(&recs, &WhitespacePunct, 2).unwrap();
        assert_eq!(pool.tokens().collect::<Vec<_>>(), ["the", ","]);

        let pool = build_frequency_pool(&[rec("a", "a a b")], &WhitespacePunct, 1).unwrap();
        assert_eq!(pool.tokens().collect::<Vec<_>>(), ["a"]);

        let pool = build_frequency_pool(&[rec("a", "b a")], &WhitespacePunct, 5).unwrap();
        assert_eq!(pool.tokens().collect::<Vec<_>>(), ["a", "b"]);
        assert!(pool.is_clamped());

        assert_eq!(build_frequency_pool(&[], &WhitespacePunct, 5), Err(Error::EmptyCorpus));
    }

    #[test]
    fn frequency_pool_rejects_mixed_languages() {
        let mut other = rec("b", "y");
        other.lp = "fr-de".parse().unwrap();
        assert!(build_frequency_pool(&[rec("a", "x"), other], &WhitespacePunct, 3).is_err());
    }

    #[test]
    fn misspell_identity_cases() {
        let mut s = spec(PerturbationKind::Misspell, 7);
        assert_eq!(perturb_misspell("", &s).unwrap(), "");
        assert_eq!(perturb_misspell("123 !?", &s).unwrap(), "123 !?");
        s.misspell_prob = 0.0;
        assert_eq!(perturb_misspell("Hello world", &s).unwrap(), "Hello world");
    }

    #[test]
    fn misspell_always_changes_at_probability_one() {
        let mut s = spec(PerturbationKind::Misspell, 3);
        s.misspell_prob = 1.0;
        let out = perturb_misspell("abcXYZ", &s).unwrap();
        for (a, b) in "abcXYZ".chars().zip(out.chars()) {
            assert_ne!(a, b);
            assert_eq!(a.is_uppercase(), b.is_uppercase());
            assert!(qwerty_neighbors(a.to_ascii_lowercase()).contains(b.to_ascii_lowercase()));
        }
        let greek = perturb_misspell("αβγ", &s).unwrap();
        assert_eq!(greek.chars().count(), 3);
        assert!(greek
            .chars()
            .zip("αβγ".chars())
            .all(|(a, b)| a != b && a.is_lowercase()));
    }

    #[test]
    fn insert_prepends_pool_token() {
        let pool = FrequencyPool::from_entries(alloc::vec![("the".to_string(), 3)]).unwrap();
        let s = spec(PerturbationKind::Insert, 1);
        assert_eq!(perturb_insert("Hello world", &pool, &s).unwrap(), "the Hello world");
        assert!(FrequencyPool::from_entries(alloc::vec![]).is_err());
    }

    #[test]
    fn capitalize_forces_one_word() {
        let mut s = spec(PerturbationKind::Capitalize, 11);
        s.capitalize_prob = 0.0;
        let out = perturb_capitalize("hello world", &s).unwrap();
        assert_eq!(out.changed_words, 1);
        assert!(out.text == "Hello world" || out.text == "hello World", "{}", out.text);
    }

    #[test]
    fn capitalize_ineligible() {
        let s = spec(PerturbationKind::Capitalize, 11);
        let out = perturb_capitalize("123 456", &s).unwrap();
        assert_eq!(out.text, "123 456");
        assert!(out.is_ineligible());
        // Already title-cased words cannot change either.
        assert!(perturb_capitalize("Hello World", &s).unwrap().is_ineligible());
    }

    #[test]
    fn title_case_rules() {
        assert_eq!(title_case("hELLO"), "Hello");
        assert_eq!(title_case("(wow)"), "(Wow)");
        assert_eq!(title_case("straße"), "Straße");
        assert_eq!(title_case("ßtraße"), "ßtraße");
    }

    #[test]
    fn corpus_lineage_and_errors() {
        let recs: Vec<_> = (0..100).map(|i| rec(&format!("r{i}"), "the quick fox")).collect();
        let pool = FrequencyPool::from_entries(alloc::vec![("the".to_string(), 1), (",".to_string(), 1)]).unwrap();
        let s = spec(PerturbationKind::Insert, 42);
        let out = perturb_corpus(&recs, &s, Some(&pool)).unwrap();
        assert_eq!(out.records.len(), 100);
        for (p, r) in out.records.iter().zip(&recs) {
            let lin = p.perturbation.as_ref().unwrap();
            assert_eq!(lin.parent_id, r.id);
            assert_eq!(lin.kind, PerturbationKind::Insert);
            assert_eq!(lin.seed, derive_seed(42, &r.id));
            assert!(p.translation_text.is_empty());
        }
        assert_eq!(out, perturb_corpus(&recs, &s, Some(&pool)).unwrap());
        assert!(matches!(
            perturb_corpus(&out.records, &s, Some(&pool)),
            Err(Error::AlreadyPerturbed(_))
        ));
        assert_eq!(perturb_corpus(&recs, &s, None), Err(Error::EmptyPool));

        let mut m = spec(PerturbationKind::Misspell, 42);
        m.misspell_prob = 0.0;
        let same = perturb_corpus(&recs, &m, None).unwrap();
        assert!(same
            .records
            .iter()
            .zip(&recs)
            .all(|(p, r)| p.source_text == r.source_text));
    }

    #[test]
    fn corpus_order_independent() {
        let recs: Vec<_> = (0..20)
            .map(|i| rec(&format!("r{i}"), "some words here to perturb"))
            .collect();
        let mut rev = recs.clone();
        rev.reverse();
        let s = spec(PerturbationKind::Capitalize, 5);
        let a = perturb_corpus(&recs, &s, None).unwrap().records;
        let mut b = perturb_corpus(&rev, &s, None).unwrap().records;
        b.reverse();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn misspell_preserves_length(text in "\\PC{0,80}", seed: u64) {
            let mut s = spec(PerturbationKind::Misspell, seed);
            s.misspell_prob = 0.3;
            let out = perturb_misspell(&text, &s).unwrap();
            prop_assert_eq!(out.chars().count(), text.chars().count());
            prop_assert_eq!(&out, &perturb_misspell(&text, &s).unwrap());
        }

        #[test]
        fn capitalize_only_changes_case(text in "\\PC{0,80}", seed: u64) {
            let s = spec(PerturbationKind::Capitalize, seed);
            let out = perturb_capitalize(&text, &s).unwrap();
            let fold = |t: &str| t.chars().flat_map(char::to_lowercase).collect::<String>();
            prop_assert_eq!(fold(&out.text), fold(&text));
        }

        #[test]
        fn insert_adds_one_token(text in "[a-z ,.!]{1,60}", seed: u64) {
            let pool = FrequencyPool::from_entries(alloc::vec![("the".into(), 2), (",".into(), 1)]).unwrap();
            let s = spec(PerturbationKind::Insert, seed);
            let out = perturb_insert(&text, &pool, &s).unwrap();
            prop_assert_eq!(
                WhitespacePunct.tokenize(&out).len(),
                WhitespacePunct.tokenize(&text).len() + 1
            );
        }
    }
}
