//! Plain-text toxicity wordlists with an optional `<path>.meta` sidecar.

use std::path::{Path, PathBuf};

use halluscope_core::detect::Wordlist;
use serde::Deserialize;

use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    segmented: bool,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// One entry per line; entries are case-folded and deduplicated, blank lines
/// and a leading byte-order mark ignored. Matching is whole-token unless the
/// sidecar says `segmented = false`.
pub fn load_wordlist(path: &Path) -> Result<Wordlist> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|b| **b == b'\n')
            .count();
        Error::parse(path, line, "invalid UTF-8")
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);

    let meta = meta_path(path);
    let segmented = if meta.exists() {
        let raw = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        toml::from_str::<Meta>(&raw)
            .map_err(|e| Error::config(&meta, e))?
            .segmented
    } else {
        true
    };
    Ok(Wordlist::new(text.lines(), segmented))
}
