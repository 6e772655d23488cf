//! TSV tables and CSV heatmap grids.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use halluscope_core::metrics::Correlation;
use halluscope_core::report::{Heatmap, HeatmapCell};

use crate::{Error, Result};

/// Renders an optional value; `None` becomes `n/a`.
pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| x.to_string())
}

pub fn corr(c: Correlation) -> String {
    match c {
        Correlation::Defined(r) => r.to_string(),
        Correlation::Undefined => "n/a".to_string(),
    }
}

/// Writes a TSV whose first line is `# col1\tcol2...`.
pub fn write_tsv(path: &Path, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "# {}", columns.join("\t")).map_err(io)?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        writeln!(w, "{}", row.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads back a table written by [`write_tsv`], skipping the header comment.
pub fn read_tsv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').map(String::from).collect())
        .collect())
}

fn write_grid(path: &Path, map: &Heatmap, cell: impl Fn(HeatmapCell) -> String) -> Result<()> {
    let err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["lp".to_string()];
    header.extend(map.columns.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for lp in &map.rows {
        let mut row = vec![lp.to_string()];
        row.extend(
            map.columns
                .iter()
                .map(|m| map.cell(lp, m).map_or_else(String::new, &cell)),
        );
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `<stem>.csv` holds values (absent cells empty); `<stem>_has_any.csv` holds
/// whether each cell has at least one hallucination.
pub fn write_heatmap(dir: &Path, stem: &str, map: &Heatmap) -> Result<()> {
    write_grid(&dir.join(format!("{stem}.csv")), map, |c| {
        c.value.map_or_else(String::new, |v| v.to_string())
    })?;
    write_grid(&dir.join(format!("{stem}_has_any.csv")), map, |c| c.has_any.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub columns: Vec<String>,
    /// (row label, cells); `None` for empty fields.
    pub rows: Vec<(String, Vec<Option<String>>)>,
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let columns = r
        .headers()
        .map_err(|e| Error::parse(path, 1, e))?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, i + 2, e))?;
        let mut it = rec.iter();
        let label = it.next().unwrap_or_default().to_string();
        rows.push((label, it.map(|f| (!f.is_empty()).then(|| f.to_string())).collect()));
    }
    Ok(Grid { columns, rows })
}
