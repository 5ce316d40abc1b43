//! Count-data ingestion.
//!
//! Input is CSV. A single-column file may be headerless; files with more
//! than one column need a [`ColumnSelector`]. A first row whose selected
//! field is not numeric is taken as a header.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Column by zero-based position or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::config("empty column selector"));
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(n) => write!(f, "{n}"),
        }
    }
}

fn parse_count(field: &str, line: u64) -> Result<u64> {
    let t = field.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(Error::data(format!("line {line}: negative count {t}"))),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        Ok(_) => Err(Error::data(format!(
            "line {line}: {t} is not a non-negative integer count"
        ))),
        Err(_) => Err(Error::data(format!(
            "line {line}: cannot parse {t:?} as a count"
        ))),
    }
}

fn looks_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Reads counts from CSV text.
pub fn read_counts<R: Read>(input: R, column: Option<&ColumnSelector>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let first = match records.next() {
        None => return Err(Error::data("input has no rows")),
        Some(r) => r.map_err(|e| Error::data(e.to_string()))?,
    };
    let width = first.len();
    let (index, header) = match column {
        None if width != 1 => {
            return Err(Error::data(format!(
                "input has {width} columns; choose one with a column selector"
            )))
        }
        None => (0, !looks_numeric(&first[0])),
        Some(ColumnSelector::Index(i)) => {
            if *i >= width {
                return Err(Error::data(format!(
                    "column {i} out of range for {width} columns"
                )));
            }
            (*i, !looks_numeric(&first[*i]))
        }
        Some(ColumnSelector::Name(name)) => {
            let i = first
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::data(format!("no column named {name:?} in the header")))?;
            (i, true)
        }
    };
    let mut counts = Vec::new();
    let mut take = |rec: &csv::StringRecord| -> Result<()> {
        let line = rec.position().map_or(0, |p| p.line());
        let field = rec
            .get(index)
            .ok_or_else(|| Error::data(format!("line {line}: missing column {index}")))?;
        if field.is_empty() {
            return Err(Error::data(format!("line {line}: empty field")));
        }
        counts.push(parse_count(field, line)?);
        Ok(())
    };
    if !header {
        take(&first)?;
    }
    for rec in records {
        take(&rec.map_err(|e| Error::data(e.to_string()))?)?;
    }
    if counts.is_empty() {
        return Err(Error::data("input has a header but no data rows"));
    }
    Dataset::new(counts)
}

pub fn read_counts_file(path: &Path, column: Option<&ColumnSelector>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_counts(file, column)
}

/// One count per line, no header.
pub fn write_counts(dataset: &Dataset) -> String {
    let mut out = String::with_capacity(dataset.len() * 4);
    for x in dataset.records() {
        out.push_str(&x.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str, col: Option<&str>) -> Result<Dataset> {
        let sel = col.map(|c| c.parse().unwrap());
        read_counts(s.as_bytes(), sel.as_ref())
    }

    #[test]
    fn headerless_single_column() {
        assert_eq!(read("3\n5\n0\n", None).unwrap().records(), &[3, 5, 0]);
        assert_eq!(
            read("509000\n95000", None).unwrap().records(),
            &[509000, 95000]
        );
        assert_eq!(read(" 7 \n8.0\n", None).unwrap().records(), &[7, 8]);
    }

    #[test]
    fn header_detection() {
        assert_eq!(read("salary\n3\n5\n", None).unwrap().records(), &[3, 5]);
        assert_eq!(
            read("id,salary\n1,3\n2,5\n", Some("salary"))
                .unwrap()
                .records(),
            &[3, 5]
        );
        assert_eq!(
            read("id,salary\n1,3\n2,5\n", Some("1")).unwrap().records(),
            &[3, 5]
        );
        assert_eq!(read("1,3\n2,5\n", Some("0")).unwrap().records(), &[1, 2]);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(read("", None), Err(Error::Data(_))));
        assert!(matches!(read("x\n", None), Err(Error::Data(_))));
        assert!(matches!(read("3\n-1\n", None), Err(Error::Data(_))));
        assert!(matches!(read("3\n1.5\n", None), Err(Error::Data(_))));
        assert!(matches!(read("3\nabc\n", None), Err(Error::Data(_))));
        assert!(matches!(read("1,2\n3,4\n", None), Err(Error::Data(_))));
        assert!(matches!(read("a,b\n3,4\n", Some("c")), Err(Error::Data(_))));
        assert!(matches!(read("3,4\n5,6\n", Some("2")), Err(Error::Data(_))));
        assert!(matches!(read("3\n", None), Err(Error::Data(_))));
        assert!(matches!(read("3\n\"\"\n", None), Err(Error::Data(_))));
    }

    #[test]
    fn round_trip() {
        let d = Dataset::new(vec![0, 12, 509000]).unwrap();
        assert_eq!(read(&write_counts(&d), None).unwrap(), d);
    }
}
