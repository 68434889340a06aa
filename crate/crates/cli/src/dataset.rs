//! CSV ingest.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{CliError, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Numeric columns of one input file, with optional consecutive daily dates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dates: Option<Vec<NaiveDate>>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Dataset {
    /// Reads `wanted` columns (every non-date column when empty). Rows are
    /// numbered from 1 after the header in error messages.
    pub fn read(path: &Path, date_column: Option<&str>, wanted: &[String]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(CliError::csv(path))?;
        let headers = reader.headers().map_err(CliError::csv(path))?.clone();
        let position = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        };
        let date_idx = date_column.map(position).transpose()?;
        let names: Vec<String> = if wanted.is_empty() {
            headers
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != date_idx)
                .map(|(_, h)| h.to_string())
                .collect()
        } else {
            wanted.to_vec()
        };
        let indices = names.iter().map(|n| position(n)).collect::<Result<Vec<_>>>()?;

        let mut columns = vec![Vec::new(); names.len()];
        let mut dates: Option<Vec<NaiveDate>> = date_idx.map(|_| Vec::new());
        for (r, record) in reader.records().enumerate() {
            let row = r + 1;
            let record = record.map_err(CliError::csv(path))?;
            let cell = |i: usize| record.get(i).unwrap_or("");
            if let (Some(di), Some(dates)) = (date_idx, dates.as_mut()) {
                let text = cell(di);
                let date = NaiveDate::parse_from_str(text, DATE_FORMAT).map_err(|_| CliError::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: headers[di].to_string(),
                    value: text.to_string(),
                })?;
                if let Some(&previous) = dates.last() {
                    if previous.succ_opt() != Some(date) {
                        return Err(CliError::DateGap {
                            path: path.to_path_buf(),
                            row,
                            previous,
                            found: date,
                        });
                    }
                }
                dates.push(date);
            }
            for (col, (&i, name)) in columns.iter_mut().zip(indices.iter().zip(&names)) {
                let text = cell(i);
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => col.push(v),
                    _ => {
                        return Err(CliError::Parse {
                            path: path.to_path_buf(),
                            row,
                            column: name.clone(),
                            value: text.to_string(),
                        })
                    }
                }
            }
        }
        Ok(Self { dates, names, columns })
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self) -> Option<NaiveDate> {
        self.dates.as_ref().and_then(|d| d.first().copied())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }
}
