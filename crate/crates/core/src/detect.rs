//! Per-record detectors: oscillation (top n-gram), detachment (calibrated
//! ALTI+ floor with LaBSE/CometKiwi exclusions), off-target output and
//! wordlist toxicity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::calibrate::ThresholdProfile;
use crate::metrics::{spbleu, top_ngram_count, TokenSequence, Tokenizer};
use crate::record::{LanguagePair, TranslationRecord};
use crate::{Error, Result};

/// Yes / no / not evaluable because a required score is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

impl Tri {
    pub fn is_yes(self) -> bool {
        self == Tri::Yes
    }
}

impl fmt::Display for Tri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tri::Yes => "yes",
            Tri::No => "no",
            Tri::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvidenceValue {
    Number(f64),
    Text(String),
}

impl From<f64> for EvidenceValue {
    fn from(v: f64) -> Self {
        EvidenceValue::Number(v)
    }
}

impl From<usize> for EvidenceValue {
    fn from(v: usize) -> Self {
        EvidenceValue::Number(v as f64)
    }
}

impl From<&str> for EvidenceValue {
    fn from(v: &str) -> Self {
        EvidenceValue::Text(v.to_string())
    }
}

impl EvidenceValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            EvidenceValue::Number(v) => Some(*v),
            EvidenceValue::Text(_) => None,
        }
    }
}

pub type Evidence = BTreeMap<String, EvidenceValue>;

fn put(evidence: &mut Evidence, key: &str, value: impl Into<EvidenceValue>) {
    evidence.insert(key.to_string(), value.into());
}

pub(crate) fn put_number(evidence: &mut Evidence, key: &str, value: f64) {
    put(evidence, key, value);
}

/// A detector outcome with the comparisons behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub value: T,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TngParams {
    pub n: usize,
    pub t: usize,
    /// Translations scoring above this spBLEU are never flagged.
    pub quality_gate: Option<f64>,
}

impl Default for TngParams {
    fn default() -> Self {
        Self {
            n: 4,
            t: 2,
            quality_gate: Some(9.0),
        }
    }
}

impl TngParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.t < 1 {
            return Err(Error::InvalidArgument("TNG n and t must be at least 1".into()));
        }
        Ok(())
    }
}

/// Flags oscillation when the translation's top n-gram count exceeds the
/// source's by at least `t`, unless the translation passes the quality gate.
/// All tokens count, punctuation included.
pub fn detect_oscillatory<S: Ord>(
    src: &[S],
    hyp: &[S],
    params: &TngParams,
    spbleu_score: Option<f64>,
) -> Result<Detection<bool>> {
    params.validate()?;
    let hyp_top = top_ngram_count(hyp, params.n);
    let src_top = top_ngram_count(src, params.n);
    let repeats = hyp_top >= src_top + params.t;
    let gated = matches!((spbleu_score, params.quality_gate), (Some(s), Some(g)) if s > g);
    let value = repeats && !gated;
    let mut evidence = Evidence::new();
    if value {
        put(&mut evidence, "tng.hyp_top_count", hyp_top);
        put(&mut evidence, "tng.src_top_count", src_top);
        put(&mut evidence, "tng.t", params.t);
        put(&mut evidence, "tng.counting", "all-tokens");
        if let Some(s) = spbleu_score {
            put(&mut evidence, "tng.spbleu", s);
        }
    }
    Ok(Detection { value, evidence })
}

/// Detached iff the ALTI+ source contribution is below the floor and neither
/// LaBSE nor CometKiwi exceeds its cap. A missing exclusion score cannot
/// exclude; the verdict is then annotated as unexcluded.
pub fn detect_detached(record: &TranslationRecord, profile: &ThresholdProfile) -> Result<Detection<Tri>> {
    if profile.model_id != record.model_id {
        return Err(Error::ProfileMismatch {
            profile: profile.model_id.clone(),
            record: record.model_id.clone(),
        });
    }
    let mut evidence = Evidence::new();
    let Some(alti) = record.scores.alti_src_contrib else {
        return Ok(Detection {
            value: Tri::Unknown,
            evidence,
        });
    };
    if alti >= profile.alti_floor {
        return Ok(Detection {
            value: Tri::No,
            evidence,
        });
    }
    put(&mut evidence, "alti", alti);
    put(&mut evidence, "alti_floor", profile.alti_floor);

    let mut unexcluded = Vec::new();
    let mut excluded = false;
    for (name, score, cap) in [
        ("labse", record.scores.labse, profile.labse_cap),
        ("cometkiwi", record.scores.cometkiwi, profile.cometkiwi_cap),
    ] {
        match score {
            Some(v) => {
                put(&mut evidence, name, v);
                if cap.is_finite() {
                    put(&mut evidence, &alloc::format!("{name}_cap"), cap);
                }
                excluded |= v > cap;
            }
            None => unexcluded.push(name),
        }
    }
    if !unexcluded.is_empty() {
        put(&mut evidence, "detached.unexcluded", unexcluded.join(",").as_str());
    }
    let value = if excluded {
        put(&mut evidence, "detached.excluded", "true");
        Tri::No
    } else {
        Tri::Yes
    };
    Ok(Detection { value, evidence })
}

/// Off-target iff the language-ID label differs from the requested target.
pub fn detect_off_target(record: &TranslationRecord) -> Detection<Tri> {
    let mut evidence = Evidence::new();
    let value = match &record.scores.lid_label {
        None => Tri::Unknown,
        Some(label) if label != record.lp.target_lang() => {
            put(&mut evidence, "lid_label", label.as_str());
            if let Some(p) = record.scores.lid_prob {
                put(&mut evidence, "lid_prob", p);
            }
            Tri::Yes
        }
        Some(_) => Tri::No,
    };
    Detection { value, evidence }
}

/// Simple lowercase mapping used as the case fold for wordlist matching.
pub fn fold_case(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).collect()
}

fn is_punct(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Case-folded toxicity wordlist for one language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Wordlist {
    entries: BTreeSet<String>,
    /// Whitespace-segmented script: match whole tokens rather than substrings.
    pub segmented: bool,
}

impl Wordlist {
    /// Folds, trims and dedupes entries; blank entries are dropped.
    pub fn new<I, S>(entries: I, segmented: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries = entries
            .into_iter()
            .map(|e| fold_case(e.as_ref().trim()))
            .filter(|e| !e.is_empty())
            .collect();
        Self { entries, segmented }
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn contains(&self, entry: &str) -> bool {
        self.entries.contains(entry)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Distinct wordlist entries found in `text`, in sorted order.
///
/// Segmented text is matched token by token (multi-word entries as
/// contiguous token runs) after stripping edge punctuation; unsegmented text
/// is matched by substring.
pub fn detect_toxic(text: &str, wordlist: &Wordlist, segmented: bool) -> Vec<String> {
    if wordlist.is_empty() {
        return Vec::new();
    }
    let folded = fold_case(text);
    let mut found = BTreeSet::new();
    if !segmented {
        for entry in wordlist.entries() {
            if folded.contains(entry) {
                found.insert(entry);
            }
        }
        return found.into_iter().map(String::from).collect();
    }

    let tokens: Vec<&str> = folded
        .split_whitespace()
        .map(|w| w.trim_matches(is_punct))
        .filter(|w| !w.is_empty())
        .collect();
    for tok in &tokens {
        if let Some(e) = wordlist.entries.get(*tok) {
            found.insert(e.as_str());
        }
    }
    for entry in wordlist.entries().filter(|e| e.contains(char::is_whitespace)) {
        let parts: Vec<&str> = entry.split_whitespace().collect();
        if tokens.windows(parts.len()).any(|w| w == parts.as_slice()) {
            found.insert(entry);
        }
    }
    found.into_iter().map(String::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Src,
    Hyp,
    Ref,
}

/// Supplies token sequences for a record's source, hypothesis or reference.
/// `None` means the side does not exist (no reference).
pub trait TokenSource {
    fn name(&self) -> &str;
    fn tokens(&self, record: &TranslationRecord, side: Side) -> Option<TokenSequence>;
}

impl<T: Tokenizer> TokenSource for T {
    fn name(&self) -> &str {
        Tokenizer::name(self)
    }

    fn tokens(&self, record: &TranslationRecord, side: Side) -> Option<TokenSequence> {
        let text = match side {
            Side::Src => &record.source_text,
            Side::Hyp => &record.translation_text,
            Side::Ref => record.reference_text.as_ref()?,
        };
        Some(self.tokenize(text))
    }
}

/// All detector outcomes for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionVerdict {
    pub record_id: String,
    pub model_id: String,
    pub lp: LanguagePair,
    pub detached: Tri,
    pub oscillatory: bool,
    pub off_target: Tri,
    pub toxic: bool,
    #[serde(default)]
    pub toxic_matches: Vec<String>,
    /// Set only for perturbed translations of candidate sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub under_perturbation: Option<bool>,
    #[serde(default)]
    pub evidence: Evidence,
}

impl DetectionVerdict {
    /// Natural hallucination: detached or oscillatory (the union, counted once).
    pub fn hallucination(&self) -> Tri {
        match (self.detached, self.oscillatory) {
            (Tri::Yes, _) | (_, true) => Tri::Yes,
            (Tri::Unknown, false) => Tri::Unknown,
            (Tri::No, false) => Tri::No,
        }
    }
}

/// spBLEU used by the TNG gate: the ingested score if present, otherwise the
/// native sentence score against the reference.
pub fn record_spbleu(record: &TranslationRecord, tokens: &dyn TokenSource) -> Result<Option<f64>> {
    if let Some(s) = record.scores.spbleu {
        return Ok(Some(s));
    }
    match tokens.tokens(record, Side::Ref) {
        Some(r) if !r.is_empty() => {
            let hyp = tokens.tokens(record, Side::Hyp).unwrap_or_default();
            Ok(Some(spbleu(hyp.as_slice(), r.as_slice())?))
        }
        _ => Ok(None),
    }
}

/// What to do with a record whose model has no threshold profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProfilePolicy {
    /// Fail with `MissingProfile`.
    #[default]
    Required,
    /// Report `detached` as unknown.
    Optional,
}

/// Runs every detector on every record; verdicts follow input order.
pub fn run_detectors(
    records: &[TranslationRecord],
    profiles: &BTreeMap<String, ThresholdProfile>,
    params: &TngParams,
    wordlists: &BTreeMap<String, Wordlist>,
    tokens: &dyn TokenSource,
) -> Result<Vec<DetectionVerdict>> {
    run_detectors_with(records, profiles, ProfilePolicy::Required, params, wordlists, tokens)
}

pub fn run_detectors_with(
    records: &[TranslationRecord],
    profiles: &BTreeMap<String, ThresholdProfile>,
    policy: ProfilePolicy,
    params: &TngParams,
    wordlists: &BTreeMap<String, Wordlist>,
    tokens: &dyn TokenSource,
) -> Result<Vec<DetectionVerdict>> {
    params.validate()?;
    records
        .iter()
        .map(|r| {
            let src = tokens.tokens(r, Side::Src).unwrap_or_default();
            let hyp = tokens.tokens(r, Side::Hyp).unwrap_or_default();
            let osc = detect_oscillatory(src.as_slice(), hyp.as_slice(), params, record_spbleu(r, tokens)?)?;
            let det = match (profiles.get(&r.model_id), policy) {
                (Some(profile), _) => detect_detached(r, profile)?,
                (None, ProfilePolicy::Required) => return Err(Error::MissingProfile(r.model_id.clone())),
                (None, ProfilePolicy::Optional) => {
                    let mut evidence = Evidence::new();
                    put(&mut evidence, "alti.profile", "missing");
                    Detection {
                        value: Tri::Unknown,
                        evidence,
                    }
                }
            };
            let off = detect_off_target(r);
            let (toxic_matches, toxic) = match wordlists.get(r.lp.target_lang()) {
                Some(wl) => {
                    let m = detect_toxic(&r.translation_text, wl, wl.segmented);
                    let any = !m.is_empty();
                    (m, any)
                }
                None => (Vec::new(), false),
            };
            let mut evidence = osc.evidence;
            evidence.extend(det.evidence);
            evidence.extend(off.evidence);
            Ok(DetectionVerdict {
                record_id: r.id.clone(),
                model_id: r.model_id.clone(),
                lp: r.lp.clone(),
                detached: det.value,
                oscillatory: osc.value,
                off_target: off.value,
                toxic,
                toxic_matches,
                under_perturbation: None,
                evidence,
            })
        })
        .collect()
}
