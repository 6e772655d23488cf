//! Aggregation of verdicts into per-LP rates, resource-level summaries,
//! type composition, direction splits, heatmap grids and correlations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectionVerdict, Tri};
use crate::metrics::{mean, median_lower, pearson, Correlation};
use crate::record::{LanguagePair, ResourceLevel, ResourceMap};
use crate::{Error, Result};

/// Which verdict flag a report counts as a hallucination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    /// Detached or oscillatory on unperturbed input.
    #[default]
    Natural,
    /// Rule (ii) on perturbed translations of candidate sources.
    Perturbation,
}

impl StudyKind {
    pub fn classify(self, v: &DetectionVerdict) -> Tri {
        match self {
            StudyKind::Natural => v.hallucination(),
            StudyKind::Perturbation => match v.under_perturbation {
                Some(true) => Tri::Yes,
                Some(false) => Tri::No,
                None => Tri::Unknown,
            },
        }
    }
}

/// Counts for one model on one language pair.
///
/// `detached`, `oscillatory`, `off_target` and `toxic` count hallucinated
/// records carrying that flag. Unknown verdicts are excluded from
/// `evaluated` and reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct LpStats {
    pub lp: LanguagePair,
    pub evaluated: usize,
    pub hallucinations: usize,
    pub detached: usize,
    pub oscillatory: usize,
    pub off_target: usize,
    pub toxic: usize,
    pub unknown: usize,
}

impl LpStats {
    fn new(lp: LanguagePair) -> Self {
        Self {
            lp,
            evaluated: 0,
            hallucinations: 0,
            detached: 0,
            oscillatory: 0,
            off_target: 0,
            toxic: 0,
            unknown: 0,
        }
    }

    /// Hallucination rate in percent; 0 when nothing was evaluated.
    pub fn rate(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            100.0 * self.hallucinations as f64 / self.evaluated as f64
        }
    }

    fn add(&mut self, v: &DetectionVerdict, kind: StudyKind) {
        match kind.classify(v) {
            Tri::Unknown => self.unknown += 1,
            Tri::No => self.evaluated += 1,
            Tri::Yes => {
                self.evaluated += 1;
                self.hallucinations += 1;
                self.detached += usize::from(v.detached == Tri::Yes);
                self.oscillatory += usize::from(v.oscillatory);
                self.off_target += usize::from(v.off_target == Tri::Yes);
                self.toxic += usize::from(v.toxic);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLevelSummary {
    pub level: ResourceLevel,
    /// (LPs with at least one hallucination, LPs at this level)
    pub lp_fraction: (usize, usize),
    /// Same, with both directions of a language pair collapsed into one.
    pub language_fraction: (usize, usize),
    pub mean_rate: f64,
    pub median_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelReport {
    pub lps: BTreeMap<LanguagePair, LpStats>,
    pub levels: BTreeMap<ResourceLevel, ResourceLevelSummary>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregate {
    pub kind: StudyKind,
    pub models: BTreeMap<String, ModelReport>,
}

fn unordered(lp: &LanguagePair) -> (String, String) {
    let (a, b) = (lp.source_lang().to_string(), lp.target_lang().to_string());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Per-model, per-LP counts and per-level summaries. Verdict order is
/// irrelevant to the result.
pub fn aggregate(verdicts: &[DetectionVerdict], resources: &ResourceMap, kind: StudyKind) -> Result<Aggregate> {
    let mut models: BTreeMap<String, ModelReport> = BTreeMap::new();
    for v in verdicts {
        let report = models.entry(v.model_id.clone()).or_default();
        report
            .lps
            .entry(v.lp.clone())
            .or_insert_with(|| LpStats::new(v.lp.clone()))
            .add(v, kind);
    }

    for report in models.values_mut() {
        let mut by_level: BTreeMap<ResourceLevel, Vec<&LpStats>> = BTreeMap::new();
        for stats in report.lps.values() {
            by_level.entry(resources.level_of(&stats.lp)?).or_default().push(stats);
        }
        for (level, stats) in by_level {
            let rates: Vec<f64> = stats.iter().map(|s| s.rate()).collect();
            let hit = stats.iter().filter(|s| s.hallucinations > 0).count();
            let mut pairs: BTreeMap<(String, String), bool> = BTreeMap::new();
            for s in &stats {
                *pairs.entry(unordered(&s.lp)).or_default() |= s.hallucinations > 0;
            }
            let summary = ResourceLevelSummary {
                level,
                lp_fraction: (hit, stats.len()),
                language_fraction: (pairs.values().filter(|h| **h).count(), pairs.len()),
                mean_rate: mean(&rates).unwrap_or(0.0),
                median_rate: median_lower(&rates).unwrap_or(0.0),
            };
            report.levels.insert(level, summary);
        }
    }
    Ok(Aggregate { kind, models })
}

/// Percentage of hallucinations that are oscillatory, per (model, LP).
/// `None` marks cells without hallucinations.
pub fn type_composition(
    verdicts: &[DetectionVerdict],
    kind: StudyKind,
) -> BTreeMap<(String, LanguagePair), Option<f64>> {
    let mut counts: BTreeMap<(String, LanguagePair), (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        let cell = counts.entry((v.model_id.clone(), v.lp.clone())).or_default();
        if kind.classify(v) == Tri::Yes {
            cell.0 += 1;
            cell.1 += usize::from(v.oscillatory);
        }
    }
    counts
        .into_iter()
        .map(|(k, (h, o))| (k, (h > 0).then(|| 100.0 * o as f64 / h as f64)))
        .collect()
}

/// Wordlist hits per (model, LP), overall and among hallucinations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToxicitySummary {
    pub records: usize,
    pub toxic_records: usize,
    pub hallucinations: usize,
    pub toxic_hallucinations: usize,
    /// Distinct entries matched in hallucinated translations.
    pub entries: BTreeSet<String>,
}

pub fn toxicity_summary(
    verdicts: &[DetectionVerdict],
    kind: StudyKind,
) -> BTreeMap<(String, LanguagePair), ToxicitySummary> {
    let mut out: BTreeMap<(String, LanguagePair), ToxicitySummary> = BTreeMap::new();
    for v in verdicts {
        let cell = out.entry((v.model_id.clone(), v.lp.clone())).or_default();
        cell.records += 1;
        cell.toxic_records += usize::from(v.toxic);
        if kind.classify(v) == Tri::Yes {
            cell.hallucinations += 1;
            cell.toxic_hallucinations += usize::from(v.toxic);
            cell.entries.extend(v.toxic_matches.iter().cloned());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionRates {
    pub into_english: Option<f64>,
    pub out_of_english: Option<f64>,
}

/// Mean LP rate into and out of English, per model.
pub fn direction_split(agg: &Aggregate) -> Result<BTreeMap<String, DirectionRates>> {
    let mut out = BTreeMap::new();
    for (model, report) in &agg.models {
        let mut into = Vec::new();
        let mut out_of = Vec::new();
        for stats in report.lps.values() {
            if stats.lp.target_lang() == "en" {
                into.push(stats.rate());
            } else if stats.lp.source_lang() == "en" {
                out_of.push(stats.rate());
            } else {
                return Err(Error::NotEnglishCentric(stats.lp.to_string()));
            }
        }
        out.insert(
            model.clone(),
            DirectionRates {
                into_english: mean(&into),
                out_of_english: mean(&out_of),
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapCell {
    pub value: Option<f64>,
    /// At least one hallucination in this cell.
    pub has_any: bool,
}

/// Rows are LPs, columns models, both sorted. Missing cells are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Heatmap {
    pub rows: Vec<LanguagePair>,
    pub columns: Vec<String>,
    pub cells: BTreeMap<(LanguagePair, String), HeatmapCell>,
}

impl Heatmap {
    pub fn cell(&self, lp: &LanguagePair, model: &str) -> Option<HeatmapCell> {
        self.cells.get(&(lp.clone(), model.to_string())).copied()
    }

    fn from_cells(cells: BTreeMap<(LanguagePair, String), HeatmapCell>) -> Self {
        let rows: BTreeSet<LanguagePair> = cells.keys().map(|(lp, _)| lp.clone()).collect();
        let columns: BTreeSet<String> = cells.keys().map(|(_, m)| m.clone()).collect();
        Self {
            rows: rows.into_iter().collect(),
            columns: columns.into_iter().collect(),
            cells,
        }
    }
}

/// Hallucination-rate grid. Cells with nothing evaluated are absent.
pub fn rate_heatmap(agg: &Aggregate) -> Heatmap {
    let mut cells = BTreeMap::new();
    for (model, report) in &agg.models {
        for (lp, stats) in &report.lps {
            cells.insert(
                (lp.clone(), model.clone()),
                HeatmapCell {
                    value: (stats.evaluated > 0).then(|| stats.rate()),
                    has_any: stats.hallucinations > 0,
                },
            );
        }
    }
    Heatmap::from_cells(cells)
}

/// Oscillatory-share grid from [`type_composition`].
pub fn composition_heatmap(verdicts: &[DetectionVerdict], kind: StudyKind) -> Heatmap {
    let cells = type_composition(verdicts, kind)
        .into_iter()
        .map(|((model, lp), value)| {
            (
                (lp, model),
                HeatmapCell {
                    value,
                    has_any: value.is_some(),
                },
            )
        })
        .collect();
    Heatmap::from_cells(cells)
}

/// model id -> one (x, y) series per LP.
pub type CorrelationInputs = BTreeMap<String, Vec<(Vec<f64>, Vec<f64>)>>;

/// Pearson r per model over the pooled (x, y) series of all its LPs.
pub fn correlation_report(per_model: &CorrelationInputs) -> Result<BTreeMap<String, Correlation>> {
    per_model
        .iter()
        .map(|(model, series)| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (x, y) in series {
                if x.len() != y.len() {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "series lengths differ for model {model:?}"
                    )));
                }
                xs.extend_from_slice(x);
                ys.extend_from_slice(y);
            }
            Ok((model.clone(), pearson(&xs, &ys)?))
        })
        .collect()
}
