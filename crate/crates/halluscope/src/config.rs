//! Run configuration (TOML). Relative paths resolve against the config
//! file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use halluscope_core::calibrate::{CalibrationConfig, QualityThresholds};
use halluscope_core::detect::TngParams;
use halluscope_core::perturb::PerturbationSpec;
use halluscope_core::report::StudyKind;
use halluscope_core::PerturbationKind;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "HALLUSCOPE_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Vec<PathBuf>,
    pub scores: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub validation_scores: Vec<PathBuf>,
    pub perturbed: Vec<PathBuf>,
    pub perturbed_scores: Vec<PathBuf>,
    pub verdicts: Vec<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub resource_map: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub plan: Option<PathBuf>,
}

impl Paths {
    fn all_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        self.corpus
            .iter_mut()
            .chain(&mut self.scores)
            .chain(&mut self.validation)
            .chain(&mut self.validation_scores)
            .chain(&mut self.perturbed)
            .chain(&mut self.perturbed_scores)
            .chain(&mut self.verdicts)
            .chain(&mut self.profiles)
            .chain(&mut self.resource_map)
            .chain(&mut self.tokens)
            .chain(&mut self.plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    pub kind: Option<PerturbationKind>,
    pub misspell_prob: f64,
    pub capitalize_prob: f64,
    pub insert_pool_size: usize,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        let spec = PerturbationSpec::new(PerturbationKind::Misspell, 0);
        Self {
            kind: None,
            misspell_prob: spec.misspell_prob,
            capitalize_prob: spec.capitalize_prob,
            insert_pool_size: spec.insert_pool_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TngSection {
    pub n: usize,
    pub t: usize,
    pub quality_gate: f64,
    /// Off for reference-free runs with no spBLEU.
    pub gate_enabled: bool,
}

impl Default for TngSection {
    fn default() -> Self {
        let p = TngParams::default();
        Self {
            n: p.n,
            t: p.t,
            quality_gate: p.quality_gate.unwrap_or(9.0),
            gate_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    pub alti_quantile: f64,
    pub cap_quantile: f64,
    pub quality_min: f64,
    pub quality_pert_max: f64,
    pub candidate_fraction: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        Self {
            alti_quantile: c.alti_quantile,
            cap_quantile: c.cap_quantile,
            quality_min: c.quality.quality_min,
            quality_pert_max: c.quality.quality_pert_max,
            candidate_fraction: c.quality.candidate_fraction,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub study: StudyKind,
    pub seed: u64,
    /// Restricts every command to these models; empty means all.
    pub models: Vec<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub paths: Paths,
    /// Target language code to wordlist file.
    pub wordlists: BTreeMap<String, PathBuf>,
    pub perturbation: PerturbationSection,
    pub tng: TngSection,
    pub thresholds: ThresholdSection,
}

/// A parsed config plus the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub raw: String,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn parse(raw: &str, path: &Path) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(raw).map_err(|e| Error::config(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.paths.all_mut().for_each(resolve);
        config.wordlists.values_mut().for_each(resolve);
        if let Some(out) = config.out.as_mut() {
            resolve(out);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Self::parse(&raw, path)?;
        Ok(LoadedConfig {
            path: path.to_path_buf(),
            raw,
            config,
        })
    }

    /// Fails on the first referenced input path that does not exist.
    pub fn check_paths(&mut self) -> Result<()> {
        let wordlists = self.wordlists.values_mut();
        for p in self.paths.all_mut().chain(wordlists) {
            if !p.exists() {
                return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
            }
        }
        Ok(())
    }

    pub fn tng_params(&self) -> TngParams {
        TngParams {
            n: self.tng.n,
            t: self.tng.t,
            quality_gate: self.tng.gate_enabled.then_some(self.tng.quality_gate),
        }
    }

    pub fn quality(&self) -> QualityThresholds {
        QualityThresholds {
            quality_min: self.thresholds.quality_min,
            quality_pert_max: self.thresholds.quality_pert_max,
            candidate_fraction: self.thresholds.candidate_fraction,
        }
    }

    pub fn calibration(&self) -> CalibrationConfig {
        CalibrationConfig {
            alti_quantile: self.thresholds.alti_quantile,
            cap_quantile: self.thresholds.cap_quantile,
            quality: self.quality(),
        }
    }

    pub fn perturbation_spec(&self) -> Option<PerturbationSpec> {
        let s = &self.perturbation;
        Some(PerturbationSpec {
            kind: s.kind?,
            misspell_prob: s.misspell_prob,
            capitalize_prob: s.capitalize_prob,
            insert_pool_size: s.insert_pool_size,
            seed: self.seed,
        })
    }

    pub fn wants_model(&self, model_id: &str) -> bool {
        self.models.is_empty() || self.models.iter().any(|m| m == model_id)
    }
}
