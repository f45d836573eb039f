//! Loader for external data: a features file with one sample per line
//! (comma- or whitespace-separated floats) and a labels file with one value
//! per line.

use std::path::Path;

use tvsplit_core::featmap::SampleSet;
use tvsplit_core::numcore::DenseMatrix;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cannot parse '{token}'")]
    Parse { line: usize, token: String },
    #[error("line {line}: {found} values, expected {expected}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("{features} feature rows but {labels} labels")]
    CountMismatch { features: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, DatasetError> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| DatasetError::Parse {
                    line: ln + 1,
                    token: t.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if row.len() != first {
                return Err(DatasetError::Ragged {
                    line: ln + 1,
                    expected: first,
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a sample set. With `normalize`, each input is scaled to unit norm
/// (zero rows are rejected).
pub fn load_samples(features: &Path, labels: &Path, normalize: bool) -> Result<SampleSet, DatasetError> {
    let mut rows = parse_rows(&std::fs::read_to_string(features)?)?;
    let ys: Vec<f64> = parse_rows(&std::fs::read_to_string(labels)?)?
        .into_iter()
        .flatten()
        .collect();
    if rows.len() != ys.len() {
        return Err(DatasetError::CountMismatch {
            features: rows.len(),
            labels: ys.len(),
        });
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty);
    }
    if normalize {
        for (i, r) in rows.iter_mut().enumerate() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(DatasetError::Invalid(format!("row {i} is zero and cannot be normalized")));
            }
            r.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let x = DenseMatrix::from_rows(&rows).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    let set = if normalize {
        SampleSet::normalized(x, ys)
    } else {
        SampleSet::new(x, ys)
    };
    set.map_err(|e| DatasetError::Invalid(e.to_string()))
}

/// Splits a loaded set into consecutive blocks of the requested sizes; the
/// last block takes whatever remains.
pub fn split_consecutive(data: &SampleSet, sizes: &[usize]) -> Result<Vec<SampleSet>, DatasetError> {
    let total: usize = sizes.iter().sum();
    if total >= data.len() {
        return Err(DatasetError::Invalid(format!(
            "need more than {total} samples, file has {}",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(sizes.len() + 1);
    let mut start = 0;
    for &len in sizes.iter().chain(std::iter::once(&(data.len() - total))) {
        let rows: Vec<Vec<f64>> = (start..start + len).map(|i| data.input(i).to_vec()).collect();
        let ys = data.labels()[start..start + len].to_vec();
        let x = DenseMatrix::from_rows(&rows).map_err(|e| DatasetError::Invalid(e.to_string()))?;
        let set = if data.is_normalized() {
            SampleSet::normalized(x, ys)
        } else {
            SampleSet::new(x, ys)
        };
        out.push(set.map_err(|e| DatasetError::Invalid(e.to_string()))?);
        start += len;
    }
    Ok(out)
}
