//! Per-model detection thresholds derived from validation score distributions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metrics::quantile_sorted;
use crate::record::TranslationRecord;
use crate::{Error, Result};

/// Validation size below which the default ALTI+ quantile sits on fewer than
/// one observation.
pub const RECOMMENDED_VALIDATION_SIZE: u64 = 5000;

/// Fixed quality thresholds shared by the perturbation study and TNG gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityThresholds {
    /// Original translations must score strictly above this to be eligible.
    pub quality_min: f64,
    /// Perturbed translations strictly below this are hallucinations.
    pub quality_pert_max: f64,
    pub candidate_fraction: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            quality_min: 9.0,
            quality_pert_max: 3.0,
            candidate_fraction: 0.20,
        }
    }
}

impl QualityThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.candidate_fraction > 0.0 && self.candidate_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "candidate_fraction = {} outside (0, 1]",
                self.candidate_fraction
            )));
        }
        if !self.quality_min.is_finite() || !self.quality_pert_max.is_finite() {
            return Err(Error::InvalidArgument("quality thresholds must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub corpus: String,
    pub record_count: u64,
}

/// Serializes infinite caps as the string `"inf"`.
mod inf_string {
    use core::fmt;

    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    struct CapVisitor;

    impl Visitor<'_> for CapVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            if v == "inf" {
                Ok(f64::INFINITY)
            } else {
                Err(E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(CapVisitor)
    }
}

/// Calibrated thresholds for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdProfile {
    pub model_id: String,
    /// ALTI+ source contributions strictly below this are detachment candidates.
    pub alti_floor: f64,
    #[serde(with = "inf_string")]
    pub labse_cap: f64,
    #[serde(with = "inf_string")]
    pub cometkiwi_cap: f64,
    pub quality_min: f64,
    pub quality_pert_max: f64,
    pub candidate_fraction: f64,
    pub alti_quantile: f64,
    pub cap_quantile: f64,
    pub provenance: Provenance,
}

impl ThresholdProfile {
    pub fn quality(&self) -> QualityThresholds {
        QualityThresholds {
            quality_min: self.quality_min,
            quality_pert_max: self.quality_pert_max,
            candidate_fraction: self.candidate_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alti_floor) {
            return Err(Error::InvalidArgument(format!(
                "alti_floor = {} outside [0, 1]",
                self.alti_floor
            )));
        }
        self.quality().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub alti_quantile: f64,
    pub cap_quantile: f64,
    pub quality: QualityThresholds,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            alti_quantile: 0.0002,
            cap_quantile: 0.90,
            quality: QualityThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CalibrationWarning {
    /// No scores of this kind; the cap is +inf and the exclusion never fires.
    MissingScores {
        field: &'static str,
    },
    SmallValidationSet {
        record_count: u64,
    },
}

impl core::fmt::Display for CalibrationWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CalibrationWarning::MissingScores { field } => {
                write!(f, "no {field} scores in validation data; cap set to inf")
            }
            CalibrationWarning::SmallValidationSet { record_count } => write!(
                f,
                "only {record_count} validation records; at least {RECOMMENDED_VALIDATION_SIZE} recommended"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub profile: ThresholdProfile,
    pub warnings: Vec<CalibrationWarning>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Builds the profile for `model_id` from validation records: the ALTI+ floor
/// is the low quantile of source contributions, the LaBSE and CometKiwi caps
/// the high quantile of their scores.
pub fn calibrate(
    validation: &[TranslationRecord],
    model_id: &str,
    corpus: &str,
    config: &CalibrationConfig,
) -> Result<Calibration> {
    config.quality.validate()?;
    for q in [config.alti_quantile, config.cap_quantile] {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
        }
    }
    let records: Vec<&TranslationRecord> = validation.iter().filter(|r| r.model_id == model_id).collect();
    if records.is_empty() {
        return Err(Error::NoValidationRecords(model_id.to_string()));
    }

    let mut alti = Vec::with_capacity(records.len());
    let mut labse = Vec::new();
    let mut kiwi = Vec::new();
    for r in &records {
        alti.push(
            r.scores
                .alti_src_contrib
                .ok_or_else(|| Error::MissingAlti(r.id.clone()))?,
        );
        labse.extend(r.scores.labse);
        kiwi.extend(r.scores.cometkiwi);
    }

    let mut warnings = Vec::new();
    let record_count = records.len() as u64;
    if record_count < RECOMMENDED_VALIDATION_SIZE {
        warnings.push(CalibrationWarning::SmallValidationSet { record_count });
    }
    let mut cap = |field: &'static str, values: Vec<f64>| -> Result<f64> {
        if values.is_empty() {
            warnings.push(CalibrationWarning::MissingScores { field });
            Ok(f64::INFINITY)
        } else {
            quantile_sorted(&sorted(values), config.cap_quantile)
        }
    };
    let labse_cap = cap("labse", labse)?;
    let cometkiwi_cap = cap("cometkiwi", kiwi)?;
    let alti_floor = quantile_sorted(&sorted(alti), config.alti_quantile)?;

    let profile = ThresholdProfile {
        model_id: model_id.to_string(),
        alti_floor,
        labse_cap,
        cometkiwi_cap,
        quality_min: config.quality.quality_min,
        quality_pert_max: config.quality.quality_pert_max,
        candidate_fraction: config.quality.candidate_fraction,
        alti_quantile: config.alti_quantile,
        cap_quantile: config.cap_quantile,
        provenance: Provenance {
            corpus: corpus.to_string(),
            record_count,
        },
    };
    profile.validate()?;
    Ok(Calibration { profile, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LanguagePair;

    fn validation(n: usize, alti: impl Fn(usize) -> f64) -> Vec<TranslationRecord> {
        let lp: LanguagePair = "en-de".parse().unwrap();
        (0..n)
            .map(|i| {
                let mut r = TranslationRecord::new(&format!("v{i}"), lp.clone(), "m2m-s", "a", "b");
                r.scores.alti_src_contrib = Some(alti(i));
                r.scores.labse = Some(i as f64 / n as f64);
                r.scores.cometkiwi = Some(1.0 - i as f64 / n as f64);
                r
            })
            .collect()
    }

    #[test]
    fn floor_is_second_lowest_of_ten_thousand() {
        let recs = validation(10_000, |i| (i + 1) as f64 / 10_000.0);
        let cal = calibrate(&recs, "m2m-s", "wmt", &CalibrationConfig::default()).unwrap();
        assert_eq!(cal.profile.alti_floor, 2.0 / 10_000.0);
        assert_eq!(cal.profile.labse_cap, 8999.0 / 10_000.0);
        assert!(cal.warnings.is_empty());
        assert_eq!(cal.profile.provenance.record_count, 10_000);
    }

    #[test]
    fn constant_distribution() {
        let recs = validation(50, |_| 0.5);
        let cal = calibrate(&recs, "m2m-s", "wmt", &CalibrationConfig::default()).unwrap();
        assert_eq!(cal.profile.alti_floor, 0.5);
        assert_eq!(
            cal.warnings,
            [CalibrationWarning::SmallValidationSet { record_count: 50 }]
        );
    }

    #[test]
    fn missing_caps_become_infinite() {
        let mut recs = validation(10, |i| i as f64 / 10.0);
        for r in &mut recs {
            r.scores.labse = None;
        }
        let cal = calibrate(&recs, "m2m-s", "wmt", &CalibrationConfig::default()).unwrap();
        assert_eq!(cal.profile.labse_cap, f64::INFINITY);
        assert!(cal.profile.cometkiwi_cap.is_finite());
        assert!(cal
            .warnings
            .contains(&CalibrationWarning::MissingScores { field: "labse" }));
    }

    #[test]
    fn errors() {
        let mut recs = validation(10, |_| 0.3);
        assert_eq!(
            calibrate(&recs, "nllb", "wmt", &CalibrationConfig::default()),
            Err(Error::NoValidationRecords("nllb".into()))
        );
        recs[4].scores.alti_src_contrib = None;
        assert_eq!(
            calibrate(&recs, "m2m-s", "wmt", &CalibrationConfig::default()),
            Err(Error::MissingAlti("v4".into()))
        );
    }

    #[test]
    fn permutation_invariant() {
        let recs = validation(300, |i| ((i * 7919) % 300) as f64 / 300.0);
        let mut rev = recs.clone();
        rev.reverse();
        let cfg = CalibrationConfig {
            alti_quantile: 0.05,
            ..Default::default()
        };
        assert_eq!(
            calibrate(&recs, "m2m-s", "wmt", &cfg).unwrap(),
            calibrate(&rev, "m2m-s", "wmt", &cfg).unwrap()
        );
    }
}
