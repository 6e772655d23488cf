//! The two end-to-end studies: hallucinations under perturbation across
//! several models, and fallback routing with reversal-rate accounting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use libm::floor;
use serde::{Deserialize, Serialize};

use crate::calibrate::QualityThresholds;
use crate::detect::{put_number, DetectionVerdict, Evidence, Side, TokenSource, Tri};
use crate::metrics::{snap_product, spbleu};
use crate::record::{LanguagePair, TranslationRecord};
use crate::{Error, Result};

/// model id -> (source id -> spBLEU)
pub type ModelScores = BTreeMap<String, BTreeMap<String, f64>>;

/// Sources whose original translations pass the quality floor for every
/// model, best mean quality first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    sources: Vec<String>,
    scores: BTreeMap<String, BTreeMap<String, f64>>,
    eligible: usize,
}

impl CandidateSet {
    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn contains(&self, source_id: &str) -> bool {
        self.scores.contains_key(source_id)
    }

    /// Original spBLEU of a candidate per model.
    pub fn scores(&self, source_id: &str) -> Option<&BTreeMap<String, f64>> {
        self.scores.get(source_id)
    }

    pub fn eligible(&self) -> usize {
        self.eligible
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Keeps sources where every model scores strictly above `quality_min`,
/// ranks them by mean score (descending, ties by ascending source id) and
/// returns the top `floor(fraction * eligible)`.
pub fn select_candidates(per_model: &ModelScores, quality_min: f64, fraction: f64) -> Result<CandidateSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "candidate fraction {fraction} outside (0, 1]"
        )));
    }
    let all: BTreeSet<&String> = per_model.values().flat_map(|m| m.keys()).collect();
    for (model, scores) in per_model {
        let missing: Vec<String> = all
            .iter()
            .filter(|id| !scores.contains_key(id.as_str()))
            .map(|id| id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::CoverageMismatch {
                model: model.clone(),
                missing,
            });
        }
    }

    let mut eligible: Vec<(&String, f64)> = all
        .into_iter()
        .filter(|id| per_model.values().all(|m| m[id.as_str()] > quality_min))
        .map(|id| {
            let mean = per_model.values().map(|m| m[id.as_str()]).sum::<f64>() / per_model.len() as f64;
            (id, mean)
        })
        .collect();
    eligible.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = floor(snap_product(fraction, eligible.len())) as usize;

    let sources: Vec<String> = eligible.iter().take(keep).map(|(id, _)| id.to_string()).collect();
    let scores = sources
        .iter()
        .map(|id| {
            let per: BTreeMap<String, f64> = per_model.iter().map(|(m, s)| (m.clone(), s[id])).collect();
            (id.clone(), per)
        })
        .collect();
    Ok(CandidateSet {
        sources,
        scores,
        eligible: eligible.len(),
    })
}

/// Rule (ii): a candidate's perturbed translation is a hallucination when its
/// spBLEU falls strictly below `quality_pert_max`.
pub fn detect_under_perturbation(
    candidates: &CandidateSet,
    source_id: &str,
    pert_spbleu: f64,
    thresholds: &QualityThresholds,
) -> Result<bool> {
    if !candidates.contains(source_id) {
        return Err(Error::NotCandidate(source_id.to_string()));
    }
    Ok(pert_spbleu < thresholds.quality_pert_max)
}

/// Outcome of the perturbation study for one perturbed translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationOutcome {
    pub record_id: String,
    pub model_id: String,
    pub source_id: String,
    pub orig_spbleu: f64,
    pub pert_spbleu: f64,
    /// `None` when the source is not a candidate.
    pub hallucination: Option<bool>,
}

impl PerturbationOutcome {
    pub fn evidence(&self) -> Evidence {
        let mut ev = Evidence::new();
        if self.hallucination.is_some() {
            put_number(&mut ev, "pert.orig_spbleu", self.orig_spbleu);
            put_number(&mut ev, "pert.spbleu", self.pert_spbleu);
        }
        ev
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationStudy {
    /// Candidates are selected separately within each language pair.
    pub candidates: BTreeMap<LanguagePair, CandidateSet>,
    /// Aligned with the perturbed records.
    pub outcomes: Vec<PerturbationOutcome>,
}

fn quality_of(record: &TranslationRecord, reference_from: &TranslationRecord, tokens: &dyn TokenSource) -> Result<f64> {
    if let Some(s) = record.scores.spbleu {
        return Ok(s);
    }
    let reference = tokens
        .tokens(reference_from, Side::Ref)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::MissingQuality(record.id.clone()))?;
    let hyp = tokens.tokens(record, Side::Hyp).unwrap_or_default();
    spbleu(hyp.as_slice(), reference.as_slice())
}

/// Runs candidate selection over the original translations of every model,
/// one language pair at a time, and applies rule (ii) to each perturbed
/// translation. Perturbed translations
/// are scored against their parent's reference unless they carry an spBLEU.
pub fn perturbation_study(
    originals: &[TranslationRecord],
    perturbed: &[TranslationRecord],
    thresholds: &QualityThresholds,
    tokens: &dyn TokenSource,
) -> Result<PerturbationStudy> {
    thresholds.validate()?;
    let mut by_id: BTreeMap<(&str, &str), &TranslationRecord> = BTreeMap::new();
    let mut per_lp: BTreeMap<LanguagePair, ModelScores> = BTreeMap::new();
    let mut orig: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in originals {
        if by_id.insert((r.model_id.as_str(), r.id.as_str()), r).is_some() {
            return Err(Error::DuplicateId(r.id.clone()));
        }
        let q = quality_of(r, r, tokens)?;
        let slot = per_lp
            .entry(r.lp.clone())
            .or_default()
            .entry(r.model_id.clone())
            .or_default();
        if slot.insert(r.source_key().to_string(), q).is_some() {
            return Err(Error::DuplicateId(r.source_key().to_string()));
        }
        orig.insert((r.model_id.as_str(), r.source_key()), q);
    }
    let candidates = per_lp
        .into_iter()
        .map(|(lp, scores)| {
            let set = select_candidates(&scores, thresholds.quality_min, thresholds.candidate_fraction)?;
            Ok((lp, set))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    let outcomes = perturbed
        .iter()
        .map(|p| {
            let parent_id = p.perturbation.as_ref().map(|l| l.parent_id.as_str()).ok_or_else(|| {
                Error::InvalidArgument(alloc::format!("record {:?} has no perturbation lineage", p.id))
            })?;
            let parent = by_id
                .get(&(p.model_id.as_str(), parent_id))
                .ok_or_else(|| Error::UnknownParent {
                    id: p.id.clone(),
                    parent: parent_id.to_string(),
                })?;
            let source_id = parent.source_key().to_string();
            let orig_spbleu = orig[&(parent.model_id.as_str(), parent.source_key())];
            let pert_spbleu = quality_of(p, parent, tokens)?;
            let set = &candidates[&parent.lp];
            let hallucination = if set.contains(&source_id) {
                Some(detect_under_perturbation(set, &source_id, pert_spbleu, thresholds)?)
            } else {
                None
            };
            Ok(PerturbationOutcome {
                record_id: p.id.clone(),
                model_id: p.model_id.clone(),
                source_id,
                orig_spbleu,
                pert_spbleu,
                hallucination,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationStudy { candidates, outcomes })
}

/// Primary model and the ordered fallbacks tried when it hallucinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallbackPlan {
    pub primary: String,
    pub fallbacks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "model")]
pub enum Routing {
    /// Primary output kept; `unreversed` when it hallucinated and every
    /// fallback did too.
    Kept {
        unreversed: bool,
    },
    ReplacedBy(String),
}

/// A hybrid-corpus record and the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridRecord {
    #[serde(flatten)]
    pub record: TranslationRecord,
    pub produced_by: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedCorpus {
    /// (source id, routing), in primary order.
    pub routing: Vec<(String, Routing)>,
    pub hybrid: Vec<HybridRecord>,
    /// Verdicts of the records that made it into the hybrid corpus.
    pub hybrid_verdicts: Vec<DetectionVerdict>,
}

/// One system's translations with their verdicts, aligned by index.
#[derive(Debug, Clone, Copy)]
pub struct SystemOutput<'a> {
    pub model_id: &'a str,
    pub records: &'a [TranslationRecord],
    pub verdicts: &'a [DetectionVerdict],
}

fn check_aligned(system: &SystemOutput<'_>) -> Result<()> {
    if system.records.len() != system.verdicts.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} records but {} verdicts for model {:?}",
            system.records.len(),
            system.verdicts.len(),
            system.model_id
        )));
    }
    for (r, v) in system.records.iter().zip(system.verdicts) {
        if r.id != v.record_id || r.model_id != v.model_id {
            return Err(Error::VerdictMismatch {
                verdict: v.record_id.clone(),
                record: r.id.clone(),
            });
        }
    }
    Ok(())
}

fn index_by_source<'a>(system: &SystemOutput<'a>) -> Result<BTreeMap<&'a str, usize>> {
    let mut map = BTreeMap::new();
    for (i, r) in system.records.iter().enumerate() {
        if map.insert(r.source_key(), i).is_some() {
            return Err(Error::DuplicateId(r.source_key().to_string()));
        }
    }
    Ok(map)
}

/// Replaces each primary hallucination with the first fallback (in plan
/// order) whose own verdict is clean. A fallback with an unknown verdict is
/// not considered clean.
pub fn route_fallback(primary: SystemOutput<'_>, fallbacks: &[SystemOutput<'_>]) -> Result<RoutedCorpus> {
    check_aligned(&primary)?;
    let mut indexes = Vec::with_capacity(fallbacks.len());
    for fb in fallbacks {
        check_aligned(fb)?;
        let idx = index_by_source(fb)?;
        let missing: Vec<String> = primary
            .records
            .iter()
            .filter(|r| !idx.contains_key(r.source_key()))
            .map(|r| r.source_key().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Alignment {
                model: fb.model_id.to_string(),
                missing,
            });
        }
        indexes.push(idx);
    }
    index_by_source(&primary)?;

    let mut routed = RoutedCorpus {
        routing: Vec::with_capacity(primary.records.len()),
        hybrid: Vec::with_capacity(primary.records.len()),
        hybrid_verdicts: Vec::with_capacity(primary.records.len()),
    };
    for (record, verdict) in primary.records.iter().zip(primary.verdicts) {
        let key = record.source_key();
        let mut chosen = None;
        if verdict.hallucination() == Tri::Yes {
            chosen = fallbacks
                .iter()
                .zip(&indexes)
                .map(|(fb, idx)| (fb, idx[key]))
                .find(|(fb, i)| fb.verdicts[*i].hallucination() == Tri::No);
        }
        let (routing, rec, v, by) = match chosen {
            Some((fb, i)) => (
                Routing::ReplacedBy(fb.model_id.to_string()),
                &fb.records[i],
                &fb.verdicts[i],
                fb.model_id,
            ),
            None => (
                Routing::Kept {
                    unreversed: verdict.hallucination() == Tri::Yes,
                },
                record,
                verdict,
                primary.model_id,
            ),
        };
        routed.routing.push((key.to_string(), routing));
        routed.hybrid.push(HybridRecord {
            record: rec.clone(),
            produced_by: by.to_string(),
        });
        routed.hybrid_verdicts.push(v.clone());
    }
    Ok(routed)
}

/// Restricts reversal accounting to one hallucination type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HallucinationType {
    Detached,
    Oscillatory,
}

/// A count ratio that is undefined when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub numerator: usize,
    pub denominator: usize,
}

impl Ratio {
    pub fn value(self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }
}

fn of_type(v: &DetectionVerdict, by_type: Option<HallucinationType>) -> bool {
    match by_type {
        None => v.hallucination() == Tri::Yes,
        Some(HallucinationType::Detached) => v.detached == Tri::Yes,
        Some(HallucinationType::Oscillatory) => v.oscillatory,
    }
}

/// Share of primary hallucinations (optionally of one type) whose aligned
/// fallback verdict is clean.
pub fn reversal_rate(
    primary: &[DetectionVerdict],
    fallback: &[DetectionVerdict],
    by_type: Option<HallucinationType>,
) -> Result<Ratio> {
    if primary.len() != fallback.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "verdict sets differ in length ({} vs {})",
            primary.len(),
            fallback.len()
        )));
    }
    let mut ratio = Ratio {
        numerator: 0,
        denominator: 0,
    };
    for (p, f) in primary.iter().zip(fallback) {
        if of_type(p, by_type) {
            ratio.denominator += 1;
            if f.hallucination() == Tri::No {
                ratio.numerator += 1;
            }
        }
    }
    Ok(ratio)
}

/// Aligns a fallback system's verdicts to the primary records by source id.
pub fn align_verdicts<'a>(
    primary: &SystemOutput<'_>,
    fallback: &SystemOutput<'a>,
) -> Result<Vec<&'a DetectionVerdict>> {
    check_aligned(fallback)?;
    let idx = index_by_source(fallback)?;
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(primary.records.len());
    for r in primary.records {
        match idx.get(r.source_key()) {
            Some(i) => out.push(&fallback.verdicts[*i]),
            None => missing.push(r.source_key().to_string()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::Alignment {
            model: fallback.model_id.to_string(),
            missing,
        })
    }
}
