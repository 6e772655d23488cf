use std::path::Path;

use halluscope_core::{LanguagePair, ResourceLevel, ResourceMap};

use crate::{Error, Result};

/// Two whitespace-separated columns per line: a language code or an
/// `src-tgt` pair, then `low`, `mid` or `high`. `#` starts a comment line.
pub fn load_resource_map(path: &Path) -> Result<ResourceMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = ResourceMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [key, level] = cols[..] else {
            return Err(Error::parse(
                path,
                n,
                format!("expected 2 columns, found {}", cols.len()),
            ));
        };
        let level: ResourceLevel = level.parse().map_err(|e| Error::parse(path, n, e))?;
        if key.contains('-') {
            let lp: LanguagePair = key.parse().map_err(|e| Error::parse(path, n, e))?;
            map.set_pair(lp, level);
        } else {
            map.set_language(key, level).map_err(|e| Error::parse(path, n, e))?;
        }
    }
    Ok(map)
}
