//! Threshold profile files: one TOML table per model id.

use std::collections::BTreeMap;
use std::path::Path;

use halluscope_core::calibrate::ThresholdProfile;
use halluscope_core::pipeline::FallbackPlan;

use crate::{Error, Result};

pub type Profiles = BTreeMap<String, ThresholdProfile>;

pub fn save_profiles(path: &Path, profiles: &Profiles) -> Result<()> {
    let text = toml::to_string(profiles).map_err(|e| Error::config(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_profiles(path: &Path) -> Result<Profiles> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let profiles: Profiles = toml::from_str(&text).map_err(|e| Error::config(path, e))?;
    for (key, p) in &profiles {
        if *key != p.model_id {
            return Err(Error::config(
                path,
                format!("table [{key}] holds the profile of {:?}", p.model_id),
            ));
        }
        p.validate().map_err(|e| Error::config(path, e))?;
    }
    Ok(profiles)
}

pub fn load_profile(path: &Path, model_id: &str) -> Result<ThresholdProfile> {
    load_profiles(path)?
        .remove(model_id)
        .ok_or_else(|| halluscope_core::Error::MissingProfile(model_id.to_string()).into())
}

/// `primary = "..."` and `fallbacks = [...]`.
pub fn load_plan(path: &Path) -> Result<FallbackPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let plan: FallbackPlan = toml::from_str(&text).map_err(|e| Error::config(path, e))?;
    if plan.fallbacks.is_empty() {
        return Err(Error::config(path, "plan lists no fallback models"));
    }
    if plan.fallbacks.contains(&plan.primary) {
        return Err(Error::config(path, "the primary model cannot be its own fallback"));
    }
    Ok(plan)
}
