//! Ordered result tables and their CSV / JSON persistence.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const HASH_COLUMN: &str = "config_hash";

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("row {row} has {found} cells, table has {expected} columns")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("cell ({row}, {column}) is not numeric")]
    NotNumeric { row: usize, column: String },
    #[error("refusing to aggregate mixed config hashes: {0} vs {1}")]
    MixedHash(String, String),
    #[error("{path}: missing {HASH_COLUMN} column")]
    MissingHash { path: PathBuf },
    #[error("{path}: columns differ from the first file")]
    ColumnMismatch { path: PathBuf },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    fn parse(s: &str) -> Cell {
        if let Ok(v) = s.parse::<i64>() {
            Cell::Int(v)
        } else if let Ok(v) = s.parse::<f64>() {
            Cell::Num(v)
        } else {
            Cell::Text(s.to_string())
        }
    }
}

// 17 significant digits round-trips every f64
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) if v.is_finite() => write!(f, "{v:.16e}"),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Provenance written next to a CSV. Wall-clock lives here rather than in
/// the CSV so that reruns produce identical CSV bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_secs: f64,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    config_hash: String,
}

impl ResultTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>, config_hash: &str) -> Self {
        ResultTable {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), TableError> {
        if row.len() != self.columns.len() {
            return Err(TableError::Ragged {
                row: self.rows.len(),
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&Cell>, TableError> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].as_f64().ok_or_else(|| TableError::NotNumeric {
                    row: i,
                    column: name.to_string(),
                })
            })
            .collect()
    }

    /// Value of `column` in the first row whose `key_column` reads `key`.
    pub fn lookup(&self, key_column: &str, key: &str, column: &str) -> Result<Option<f64>, TableError> {
        let k = self.column_index(key_column)?;
        let j = self.column_index(column)?;
        Ok(self.rows.iter().find(|r| r[k].to_string() == key).and_then(|r| r[j].as_f64()))
    }

    pub fn to_csv_string(&self) -> Result<String, TableError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        header.push(HASH_COLUMN);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.iter().map(Cell::to_string).collect();
            rec.push(self.config_hash.clone());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| TableError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, TableError> {
        let mut r = csv::ReaderBuilder::new().from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let hash_at = header
            .iter()
            .position(|c| c == HASH_COLUMN)
            .ok_or_else(|| TableError::MissingHash { path: path.to_path_buf() })?;
        let columns: Vec<String> = header.iter().enumerate().filter(|(i, _)| *i != hash_at).map(|(_, c)| c.clone()).collect();
        let mut table: Option<ResultTable> = None;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let hash = rec.get(hash_at).unwrap_or_default().to_string();
            match &table {
                None => table = Some(ResultTable::new(columns.clone(), &hash)),
                Some(t) if t.config_hash != hash => return Err(TableError::MixedHash(t.config_hash.clone(), hash)),
                Some(_) => {}
            }
            rows.push(rec.iter().enumerate().filter(|(i, _)| *i != hash_at).map(|(_, s)| Cell::parse(s)).collect());
        }
        let mut table = table.unwrap_or_else(|| ResultTable::new(columns, ""));
        for row in rows {
            table.push(row)?;
        }
        Ok(table)
    }

    /// Concatenates CSVs written under one config. Files from different
    /// configs are refused.
    pub fn load_aggregate(paths: &[PathBuf]) -> Result<Self, TableError> {
        let mut out: Option<ResultTable> = None;
        for path in paths {
            let t = Self::read_csv(path)?;
            match &mut out {
                None => out = Some(t),
                Some(acc) => {
                    if acc.columns != t.columns {
                        return Err(TableError::ColumnMismatch { path: path.clone() });
                    }
                    if !t.is_empty() && !acc.is_empty() && acc.config_hash != t.config_hash {
                        return Err(TableError::MixedHash(acc.config_hash.clone(), t.config_hash.clone()));
                    }
                    if acc.is_empty() {
                        acc.config_hash = t.config_hash.clone();
                    }
                    acc.rows.extend(t.rows);
                }
            }
        }
        Ok(out.unwrap_or_else(|| ResultTable::new(Vec::<String>::new(), "")))
    }
}

impl Metadata {
    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TableError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
