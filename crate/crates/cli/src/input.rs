//! Segment and history CSV files.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use mkalloc::Segment;

use crate::error::{CliError, CliResult};

/// One row of a segments file. `a` and `b` may be absent when the file only
/// supplies market sizes (prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRow {
    pub id: String,
    pub size: f64,
    pub bias: Option<f64>,
    pub sensitivity: Option<f64>,
    pub options: Option<Vec<f64>>,
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentsFile {
    pub path: PathBuf,
    pub rows: Vec<SegmentRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub segment: String,
    pub cost: f64,
    pub sales: f64,
    pub features: Vec<(String, String)>,
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFile {
    pub path: PathBuf,
    pub feature_names: Vec<String>,
    pub rows: Vec<HistoryRow>,
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    records: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let parse_err = |line: u64, e: csv::Error| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        };
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut records = Vec::new();
        for rec in reader.records() {
            match rec {
                Ok(r) => records.push((r.position().map_or(0, |p| p.line()), r)),
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(parse_err(line, e));
                }
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            records,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> CliResult<usize> {
        self.column(name).ok_or_else(|| CliError::Parse {
            path: self.path.clone(),
            line: 1,
            message: format!("missing column {name:?}"),
        })
    }

    fn err(&self, line: u64, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn number(&self, line: u64, rec: &csv::StringRecord, col: usize) -> CliResult<f64> {
        let raw = rec.get(col).unwrap_or("");
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, format!("column {:?}: {raw:?} is not a finite number", self.headers[col]))),
        }
    }

    fn optional_number(&self, line: u64, rec: &csv::StringRecord, col: Option<usize>) -> CliResult<Option<f64>> {
        match col {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => self.number(line, rec, c).map(Some),
            _ => Ok(None),
        }
    }
}

pub fn parse_options(raw: &str) -> Result<Vec<f64>, String> {
    let opts = raw
        .split('|')
        .map(|t| match t.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("option {t:?} is not a finite number")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if opts.windows(2).any(|w| w[0] >= w[1]) {
        return Err("options must be strictly ascending".into());
    }
    Ok(opts)
}

impl SegmentsFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let t = Table::read(path)?;
        let id_col = t.require("segment_id")?;
        let d_col = t.require("D")?;
        let a_col = t.column("a");
        let b_col = t.column("b");
        let opt_col = t.column("options");

        let mut seen = HashSet::new();
        let mut rows = Vec::with_capacity(t.records.len());
        for (line, rec) in &t.records {
            let line = *line;
            let id = rec.get(id_col).unwrap_or("").to_string();
            if id.is_empty() {
                return Err(t.err(line, "empty segment_id"));
            }
            if !seen.insert(id.clone()) {
                return Err(t.err(line, format!("duplicate segment_id {id:?}")));
            }
            let size = t.number(line, rec, d_col)?;
            if !(size > 0.0) {
                return Err(t.err(line, format!("D must be positive, got {size}")));
            }
            let bias = t.optional_number(line, rec, a_col)?;
            let sensitivity = t.optional_number(line, rec, b_col)?;
            if let Some(b) = sensitivity {
                if !(b > 0.0) {
                    return Err(t.err(line, format!("b must be positive, got {b}")));
                }
            }
            let options = match opt_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
                Some(raw) => Some(parse_options(raw).map_err(|m| t.err(line, m))?),
                None => None,
            };
            rows.push(SegmentRow {
                id,
                size,
                bias,
                sensitivity,
                options,
                line,
            });
        }
        Ok(Self { path: t.path, rows })
    }

    /// Response curves; every row must carry `a` and `b`.
    pub fn segments(&self) -> CliResult<Vec<Segment>> {
        self.rows
            .iter()
            .map(|r| {
                let missing = |col: &str| CliError::Parse {
                    path: self.path.clone(),
                    line: r.line,
                    message: format!("column {col:?} is required here"),
                };
                let a = r.bias.ok_or_else(|| missing("a"))?;
                let b = r.sensitivity.ok_or_else(|| missing("b"))?;
                let seg = Segment::new(r.id.clone(), r.size, a, b).map_err(|e| CliError::Parse {
                    path: self.path.clone(),
                    line: r.line,
                    message: e.to_string(),
                })?;
                Ok(match &r.options {
                    Some(o) => seg.with_options(o.clone())?,
                    None => seg,
                })
            })
            .collect()
    }

    pub fn size_of(&self, id: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.id == id).map(|r| r.size)
    }
}

impl HistoryFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let t = Table::read(path)?;
        let id_col = t.require("segment_id")?;
        let cost_col = t.require("cost")?;
        let sales_col = t.require("sales")?;
        let feature_cols: Vec<usize> = (0..t.headers.len())
            .filter(|c| ![id_col, cost_col, sales_col].contains(c))
            .collect();
        let feature_names: Vec<String> = feature_cols.iter().map(|&c| t.headers[c].clone()).collect();

        let mut rows = Vec::with_capacity(t.records.len());
        for (line, rec) in &t.records {
            let line = *line;
            let segment = rec.get(id_col).unwrap_or("").to_string();
            if segment.is_empty() {
                return Err(t.err(line, "empty segment_id"));
            }
            let cost = t.number(line, rec, cost_col)?;
            let sales = t.number(line, rec, sales_col)?;
            if sales < 0.0 {
                return Err(t.err(line, format!("sales must be non-negative, got {sales}")));
            }
            let features = feature_cols
                .iter()
                .map(|&c| (t.headers[c].clone(), rec.get(c).unwrap_or("").to_string()))
                .collect();
            rows.push(HistoryRow {
                segment,
                cost,
                sales,
                features,
                line,
            });
        }
        if rows.is_empty() {
            return Err(mkalloc::Error::EmptyDataset.into());
        }
        Ok(Self {
            path: t.path,
            feature_names,
            rows,
        })
    }
}
