//! CSV ingestion.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use decorrel::Point;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Minimum number of valid rows for inference.
pub const MIN_ROWS: usize = 10;

/// A column picked by zero-based position or by header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.trim().to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub x: Column,
    pub y: Column,
    pub has_header: bool,
    pub min_rows: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            x: Column::Index(0),
            y: Column::Index(1),
            has_header: true,
            min_rows: MIN_ROWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowWarning {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<Point>,
    pub source: PathBuf,
    /// Column labels: header names, or `col<i>` without a header.
    pub labels: (String, String),
    /// Rows that were skipped.
    pub warnings: Vec<RowWarning>,
}

pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, path, opts)
}

pub fn ingest_reader<R: Read>(reader: R, source: &Path, opts: &IngestOptions) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let (ix, iy, labels) = if opts.has_header {
        let headers = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("{}: cannot read header: {e}", source.display())))?
            .clone();
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h) {
                return Err(CliError::Data(format!(
                    "{}: duplicated header name {h:?}",
                    source.display()
                )));
            }
        }
        let find = |c: &Column| -> CliResult<usize> {
            match c {
                Column::Index(i) if *i < headers.len() => Ok(*i),
                Column::Index(i) => Err(CliError::Usage(format!(
                    "column {i} out of range: header has {} columns",
                    headers.len()
                ))),
                Column::Name(n) => headers
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| CliError::Usage(format!("no column named {n:?}"))),
            }
        };
        let (ix, iy) = (find(&opts.x)?, find(&opts.y)?);
        let labels = (headers[ix].to_string(), headers[iy].to_string());
        (ix, iy, labels)
    } else {
        let idx = |c: &Column| match c {
            Column::Index(i) => Ok(*i),
            Column::Name(n) => Err(CliError::Usage(format!(
                "column {n:?} selected by name but the file has no header"
            ))),
        };
        let (ix, iy) = (idx(&opts.x)?, idx(&opts.y)?);
        (ix, iy, (format!("col{ix}"), format!("col{iy}")))
    };

    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                warnings.push(RowWarning {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let field = |i: usize, label: &str| -> Result<f64, String> {
            let raw = rec.get(i).ok_or_else(|| format!("missing field for {label}"))?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(format!("non-finite value {raw:?} for {label}")),
                Err(_) if raw.is_empty() => Err(format!("missing value for {label}")),
                Err(_) => Err(format!("non-numeric value {raw:?} for {label}")),
            }
        };
        match (field(ix, &labels.0), field(iy, &labels.1)) {
            (Ok(x), Ok(y)) => pairs.push([x, y]),
            (Err(m), _) | (_, Err(m)) => warnings.push(RowWarning { line, message: m }),
        }
    }
    if pairs.len() < opts.min_rows {
        return Err(CliError::Data(format!(
            "{}: {} valid rows, at least {} required",
            source.display(),
            pairs.len(),
            opts.min_rows
        )));
    }
    Ok(Dataset {
        pairs,
        source: source.to_path_buf(),
        labels,
        warnings,
    })
}

/// Writes `x,y` rows with a header.
pub fn write_pairs_csv<W: std::io::Write>(mut w: W, pairs: &[Point]) -> std::io::Result<()> {
    writeln!(w, "x,y")?;
    for p in pairs {
        writeln!(w, "{},{}", p[0], p[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, opts: &IngestOptions) -> CliResult<Dataset> {
        ingest_reader(text.as_bytes(), Path::new("mem.csv"), opts)
    }

    fn rows(n: usize) -> String {
        let mut s = String::from("x,y\n");
        for i in 0..n {
            s.push_str(&format!("{}.0,{}.5\n", i, 2 * i));
        }
        s
    }

    #[test]
    fn twelve_rows() {
        let d = ingest(&rows(12), &IngestOptions::default()).unwrap();
        assert_eq!(d.pairs.len(), 12);
        assert_eq!(d.pairs[3], [3.0, 6.5]);
        assert_eq!(d.labels, ("x".to_string(), "y".to_string()));
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn malformed_row_is_reported_with_line() {
        let mut s = rows(50);
        s = s.replacen("17.0,34.5", "17.0,abc", 1);
        let d = ingest(&s, &IngestOptions::default()).unwrap();
        assert_eq!(d.pairs.len(), 49);
        assert_eq!(d.warnings.len(), 1);
        // header is line 1, row i sits on line i + 2
        assert_eq!(d.warnings[0].line, 19);
        assert!(d.warnings[0].message.contains("abc"));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            ingest(&rows(5), &IngestOptions::default()),
            Err(CliError::Data(_))
        ));
    }

    #[test]
    fn duplicate_header() {
        let s = rows(12).replacen("x,y", "a,a", 1);
        assert!(matches!(ingest(&s, &IngestOptions::default()), Err(CliError::Data(_))));
    }

    #[test]
    fn columns_by_name_and_index() {
        let mut s = String::from("id,logg,act\n");
        for i in 0..10 {
            s.push_str(&format!("p{i},{},{}\n", 4.0 + 0.1 * i as f64, -5.0 + 0.2 * i as f64));
        }
        let opts = IngestOptions {
            x: "act".parse().unwrap(),
            y: "1".parse().unwrap(),
            ..Default::default()
        };
        let d = ingest(&s, &opts).unwrap();
        assert_eq!(d.pairs[0], [-5.0, 4.0]);
        assert_eq!(d.labels, ("act".to_string(), "logg".to_string()));

        let bad = IngestOptions {
            x: "nope".parse().unwrap(),
            ..Default::default()
        };
        assert!(matches!(ingest(&s, &bad), Err(CliError::Usage(_))));
    }

    #[test]
    fn headerless_input_and_missing_fields() {
        let mut s = String::new();
        for i in 0..11 {
            s.push_str(&format!("{i},{}\n", i * i));
        }
        s.push_str("3\n");
        s.push_str("4,inf\n");
        let opts = IngestOptions {
            has_header: false,
            ..Default::default()
        };
        let d = ingest(&s, &opts).unwrap();
        assert_eq!(d.pairs.len(), 11);
        assert_eq!(d.warnings.iter().map(|w| w.line).collect::<Vec<_>>(), vec![12, 13]);
        assert_eq!(d.labels.0, "col0");
    }
}
