//! JSONL corpora, score files and verdict files.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use halluscope_core::detect::DetectionVerdict;
use halluscope_core::{ScoreMap, TranslationRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::parse(path, i + 1, "invalid UTF-8"),
            _ => Error::io(path, e),
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses every non-blank line as one `T`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    lines(path)?
        .into_iter()
        .map(|(n, line)| {
            serde_json::from_str(&line)
                .map(|v| (n, v))
                .map_err(|e| Error::parse(path, n, e))
        })
        .collect()
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads and validates a corpus file. Errors carry the offending line.
pub fn load_corpus(path: &Path) -> Result<Vec<TranslationRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, r) in read_jsonl::<TranslationRecord>(path)? {
        r.validate().map_err(|e| Error::parse(path, n, e))?;
        if !seen.insert(r.id.clone()) {
            return Err(Error::parse(path, n, halluscope_core::Error::DuplicateId(r.id)));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[TranslationRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// One row of a score file: a record id plus any subset of score keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub id: String,
    #[serde(flatten)]
    pub scores: ScoreMap,
}

pub fn read_scores(path: &Path) -> Result<Vec<(usize, ScoreRow)>> {
    read_jsonl::<serde_json::Map<String, serde_json::Value>>(path)?
        .into_iter()
        .map(|(n, mut obj)| {
            let id = match obj.remove("id") {
                Some(serde_json::Value::String(id)) => id,
                Some(_) => return Err(Error::parse(path, n, "\"id\" must be a string")),
                None => return Err(Error::parse(path, n, "missing \"id\"")),
            };
            let scores: ScoreMap =
                serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::parse(path, n, e))?;
            scores.validate().map_err(|e| Error::parse(path, n, e))?;
            Ok((n, ScoreRow { id, scores }))
        })
        .collect()
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    write_jsonl(path, rows)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub rows: usize,
    pub merged: usize,
    /// Keys that replaced an existing value.
    pub overwritten: usize,
    /// Rows whose id matched no record.
    pub unmatched: usize,
}

/// Overlays a score file onto `records`, newest value winning per key.
pub fn merge_scores(records: &mut [TranslationRecord], path: &Path) -> Result<MergeReport> {
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let mut report = MergeReport::default();
    for (_, row) in read_scores(path)? {
        report.rows += 1;
        match index.get(&row.id) {
            Some(&i) => {
                report.overwritten += records[i].scores.merge(&row.scores);
                report.merged += 1;
            }
            None => report.unmatched += 1,
        }
    }
    if report.unmatched > 0 {
        log::warn!(
            "{}: {} of {} score rows matched no record",
            path.display(),
            report.unmatched,
            report.rows
        );
    }
    if report.overwritten > 0 {
        log::info!("{}: overwrote {} existing scores", path.display(), report.overwritten);
    }
    Ok(report)
}

pub fn load_verdicts(path: &Path) -> Result<Vec<DetectionVerdict>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, v)| v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn corpus_line(id: &str, extra: &str) -> String {
        format!(
            r#"{{"id":"{id}","lp":"en-de","model_id":"m","source_text":"Hello.","translation_text":"Hallo."{extra}}}"#
        )
    }

    #[test]
    fn loads_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let body: Vec<String> = ["b", "a", "c"].iter().map(|id| corpus_line(id, "")).collect();
        fs::write(&p, body.join("\n") + "\n").unwrap();
        let recs = load_corpus(&p).unwrap();
        assert_eq!(recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
    }

    #[test]
    fn duplicate_id_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let mut body: Vec<String> = (0..6).map(|i| corpus_line(&format!("r{i}"), "")).collect();
        body.push(corpus_line("r2", ""));
        fs::write(&p, body.join("\n")).unwrap();
        match load_corpus(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 7);
                assert!(message.contains("r2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_error_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        fs::write(&p, corpus_line("r", r#","scores":{"labse":1.5}"#)).unwrap();
        let err = load_corpus(&p).unwrap_err().to_string();
        assert!(err.contains("labse"), "{err}");
    }

    #[test]
    fn malformed_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        fs::write(&p, format!("{}\n{{not json\n", corpus_line("a", ""))).unwrap();
        assert!(matches!(load_corpus(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn merge_rules() {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("c.jsonl");
        fs::write(&c, corpus_line("r1", r#","scores":{"spbleu":10.0}"#)).unwrap();
        let s = dir.path().join("s.jsonl");
        fs::write(
            &s,
            "{\"id\":\"r1\",\"alti_src_contrib\":0.31,\"spbleu\":20.0}\n{\"id\":\"zzz\",\"labse\":0.1}\n",
        )
        .unwrap();
        let mut recs = load_corpus(&c).unwrap();
        let rep = merge_scores(&mut recs, &s).unwrap();
        assert_eq!(
            rep,
            MergeReport {
                rows: 2,
                merged: 1,
                overwritten: 1,
                unmatched: 1
            }
        );
        assert_eq!(recs[0].scores.alti_src_contrib, Some(0.31));
        assert_eq!(recs[0].scores.spbleu, Some(20.0));

        let once = recs.clone();
        merge_scores(&mut recs, &s).unwrap();
        assert_eq!(recs, once);
    }

    #[test]
    fn score_rows_reject_bad_types_and_keys() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.jsonl");
        fs::write(&s, "{\"id\":\"r1\",\"labse\":\"high\"}\n").unwrap();
        assert!(matches!(read_scores(&s), Err(Error::Parse { line: 1, .. })));
        fs::write(&s, "{\"id\":\"r1\",\"bleurt\":0.3}\n").unwrap();
        assert!(matches!(read_scores(&s), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn emitted_rows_carry_only_their_keys() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.jsonl");
        let row = ScoreRow {
            id: "r1".into(),
            scores: ScoreMap {
                alti_src_contrib: Some(0.5),
                ..Default::default()
            },
        };
        write_scores(&s, std::slice::from_ref(&row)).unwrap();
        assert_eq!(
            fs::read_to_string(&s).unwrap(),
            "{\"id\":\"r1\",\"alti_src_contrib\":0.5}\n"
        );
        assert_eq!(read_scores(&s).unwrap(), vec![(1, row)]);
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_corpus(Path::new("/nonexistent/c.jsonl")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("/nonexistent/c.jsonl"));
    }
}
