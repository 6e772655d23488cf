//! Pre-tokenized sidecar: JSONL rows `{id, side, tokens}`.

use std::collections::HashMap;
use std::path::Path;

use halluscope_core::detect::{Side, TokenSource};
use halluscope_core::metrics::{TokenSequence, Tokenizer, WhitespacePunct};
use halluscope_core::TranslationRecord;
use serde::Deserialize;

use crate::jsonl::read_jsonl;
use crate::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    id: String,
    side: Side,
    tokens: Vec<String>,
}

/// Token sequences supplied by an external tokenizer. Sides without a row
/// fall back to the built-in tokenizer.
#[derive(Debug, Default)]
pub struct SidecarTokens {
    rows: HashMap<(String, Side), TokenSequence>,
    fallback: WhitespacePunct,
}

impl SidecarTokens {
    pub fn load(path: &Path) -> Result<Self> {
        let mut rows = HashMap::new();
        for (n, row) in read_jsonl::<Row>(path)? {
            let seq = TokenSequence::new(row.tokens).map_err(|e| Error::parse(path, n, e))?;
            if rows.insert((row.id.clone(), row.side), seq).is_some() {
                return Err(Error::parse(
                    path,
                    n,
                    format!("second {:?} row for {:?}", row.side, row.id),
                ));
            }
        }
        Ok(Self {
            rows,
            fallback: WhitespacePunct,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl TokenSource for SidecarTokens {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn tokens(&self, record: &TranslationRecord, side: Side) -> Option<TokenSequence> {
        if let Some(seq) = self.rows.get(&(record.id.clone(), side)) {
            return Some(seq.clone());
        }
        let text = match side {
            Side::Src => &record.source_text,
            Side::Hyp => &record.translation_text,
            Side::Ref => record.reference_text.as_ref()?,
        };
        Some(self.fallback.tokenize(text))
    }
}
