//! Translation records, score maps and resource levels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An ordered (source, target) translation direction, written `src-tgt`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguagePair {
    source_lang: String,
    target_lang: String,
}

fn check_code(code: &str) -> Result<()> {
    let ok = !code.is_empty()
        && code
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLanguageCode(code.to_string()))
    }
}

impl LanguagePair {
    pub fn new(source_lang: &str, target_lang: &str) -> Result<Self> {
        check_code(source_lang)?;
        check_code(target_lang)?;
        if source_lang == target_lang {
            return Err(Error::IdenticalLanguages(format!("{source_lang}-{target_lang}")));
        }
        Ok(Self {
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
        })
    }

    pub fn source_lang(&self) -> &str {
        &self.source_lang
    }

    pub fn target_lang(&self) -> &str {
        &self.target_lang
    }

    pub fn reversed(&self) -> Self {
        Self {
            source_lang: self.target_lang.clone(),
            target_lang: self.source_lang.clone(),
        }
    }

    pub fn involves(&self, lang: &str) -> bool {
        self.source_lang == lang || self.target_lang == lang
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source_lang, self.target_lang)
    }
}

impl FromStr for LanguagePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((src, tgt)) => Self::new(src, tgt),
            None => Err(Error::InvalidLanguageCode(s.to_string())),
        }
    }
}

impl TryFrom<String> for LanguagePair {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LanguagePair> for String {
    fn from(lp: LanguagePair) -> String {
        lp.to_string()
    }
}

/// Supervision bucket. Ordered so that `min` picks the scarcer level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceLevel {
    Low,
    Mid,
    High,
}

impl ResourceLevel {
    pub const ALL: [ResourceLevel; 3] = [ResourceLevel::Low, ResourceLevel::Mid, ResourceLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceLevel::Low => "low",
            ResourceLevel::Mid => "mid",
            ResourceLevel::High => "high",
        }
    }
}

impl fmt::Display for ResourceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResourceLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(ResourceLevel::Low),
            "mid" => Ok(ResourceLevel::Mid),
            "high" => Ok(ResourceLevel::High),
            other => Err(Error::UnknownLevel(other.to_string())),
        }
    }
}

/// Per-language levels plus explicit per-pair overrides.
///
/// A pair without an override gets the lower of its two languages' levels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResourceMap {
    languages: BTreeMap<String, ResourceLevel>,
    pairs: BTreeMap<LanguagePair, ResourceLevel>,
}

impl ResourceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_language(&mut self, lang: &str, level: ResourceLevel) -> Result<()> {
        check_code(lang)?;
        self.languages.insert(lang.to_string(), level);
        Ok(())
    }

    pub fn set_pair(&mut self, lp: LanguagePair, level: ResourceLevel) {
        self.pairs.insert(lp, level);
    }

    pub fn language_level(&self, lang: &str) -> Result<ResourceLevel> {
        self.languages
            .get(lang)
            .copied()
            .ok_or_else(|| Error::UnmappedLanguage(lang.to_string()))
    }

    pub fn level_of(&self, lp: &LanguagePair) -> Result<ResourceLevel> {
        if let Some(level) = self.pairs.get(lp) {
            return Ok(*level);
        }
        let src = self.language_level(lp.source_lang())?;
        let tgt = self.language_level(lp.target_lang())?;
        Ok(src.min(tgt))
    }
}

/// Named optional scores attached to a record. Absent is not zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spbleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet22: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cometkiwi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alti_src_contrib: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid_prob: Option<f64>,
}

fn check_range(field: &'static str, value: Option<f64>, lo: f64, hi: f64, range: &'static str) -> Result<()> {
    match value {
        Some(v) if !(lo..=hi).contains(&v) => Err(Error::ScoreOutOfRange { field, value: v, range }),
        _ => Ok(()),
    }
}

impl ScoreMap {
    pub fn is_empty(&self) -> bool {
        *self == ScoreMap::default()
    }

    pub fn validate(&self) -> Result<()> {
        check_range("spbleu", self.spbleu, 0.0, 100.0, "[0, 100]")?;
        check_range("comet22", self.comet22, f64::MIN, f64::MAX, "the finite reals")?;
        check_range("cometkiwi", self.cometkiwi, f64::MIN, f64::MAX, "the finite reals")?;
        check_range("labse", self.labse, -1.0, 1.0, "[-1, 1]")?;
        check_range("alti_src_contrib", self.alti_src_contrib, 0.0, 1.0, "[0, 1]")?;
        check_range("lid_prob", self.lid_prob, 0.0, 1.0, "[0, 1]")?;
        if let Some(label) = &self.lid_label {
            check_code(label)?;
        }
        Ok(())
    }

    /// Overlays `newer` onto `self`; keys present in `newer` win.
    /// Returns how many keys were overwritten.
    pub fn merge(&mut self, newer: &ScoreMap) -> usize {
        fn take<T: Clone>(slot: &mut Option<T>, new: &Option<T>, overwritten: &mut usize) {
            if let Some(v) = new {
                if slot.is_some() {
                    *overwritten += 1;
                }
                *slot = Some(v.clone());
            }
        }
        let mut overwritten = 0;
        take(&mut self.spbleu, &newer.spbleu, &mut overwritten);
        take(&mut self.comet22, &newer.comet22, &mut overwritten);
        take(&mut self.cometkiwi, &newer.cometkiwi, &mut overwritten);
        take(&mut self.labse, &newer.labse, &mut overwritten);
        take(&mut self.alti_src_contrib, &newer.alti_src_contrib, &mut overwritten);
        take(&mut self.lid_label, &newer.lid_label, &mut overwritten);
        take(&mut self.lid_prob, &newer.lid_prob, &mut overwritten);
        overwritten
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Misspell,
    Insert,
    Capitalize,
}

impl PerturbationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Misspell => "misspell",
            PerturbationKind::Insert => "insert",
            PerturbationKind::Capitalize => "capitalize",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationLineage {
    pub parent_id: String,
    pub kind: PerturbationKind,
    pub seed: u64,
}

/// One (source, translation) pair produced by one model.
///
/// `source_id` ties translations of the same source sentence together across
/// models and perturbations; it defaults to `id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    pub lp: LanguagePair,
    pub model_id: String,
    pub source_text: String,
    #[serde(default)]
    pub translation_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
    #[serde(default, skip_serializing_if = "ScoreMap::is_empty")]
    pub scores: ScoreMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationLineage>,
}

impl TranslationRecord {
    pub fn new(id: &str, lp: LanguagePair, model_id: &str, source: &str, translation: &str) -> Self {
        Self {
            id: id.to_string(),
            source_id: None,
            lp,
            model_id: model_id.to_string(),
            source_text: source.to_string(),
            translation_text: translation.to_string(),
            reference_text: None,
            scores: ScoreMap::default(),
            perturbation: None,
        }
    }

    pub fn source_key(&self) -> &str {
        self.source_id.as_deref().unwrap_or(&self.id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_text.is_empty() {
            return Err(Error::EmptySource(self.id.clone()));
        }
        self.scores.validate()
    }
}

/// Validates every record and checks id uniqueness. On failure returns the
/// index of the offending record together with the error.
pub fn validate_corpus(records: &[TranslationRecord]) -> core::result::Result<(), (usize, Error)> {
    let mut seen = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| (i, e))?;
        if !seen.insert(r.id.as_str()) {
            return Err((i, Error::DuplicateId(r.id.clone())));
        }
    }
    Ok(())
}
