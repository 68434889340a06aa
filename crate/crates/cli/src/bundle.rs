//! Result bundle layout: flat CSV tables plus a `key = value` manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use emdr_core::config::parse_pairs;
use emdr_core::RunConfig;

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const SENSITIVITY: &str = "sensitivity.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const BOOTSTRAP: &str = "bootstrap.csv";
pub const REPORT_DIR: &str = "report";

/// Seventeen significant digits: round-trips every `f64`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn decomposition_file(prefix: Option<&str>, channel: &str) -> String {
    match prefix {
        Some(p) => format!("decomposition_{p}_{channel}.csv"),
        None => format!("decomposition_{channel}.csv"),
    }
}

pub fn terms_file(design: &str) -> String {
    format!("terms_{design}.csv")
}

pub fn submodels_file(design: &str) -> String {
    format!("submodels_{design}.csv")
}

pub fn design_file(design: &str, submodel: &str) -> String {
    format!("design_{design}_{submodel}.csv")
}

pub fn cv_file(design: &str, submodel: &str) -> String {
    format!("cv_{design}_{submodel}.csv")
}

pub fn fitted_file(design: &str) -> String {
    format!("fitted_{design}.csv")
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(header).map_err(CliError::csv(path))?;
    for row in rows {
        w.write_record(row).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// A CSV table read back from a bundle.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
        let header = r
            .headers()
            .map_err(CliError::csv(path))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(CliError::csv(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn {
                path: self.path.clone(),
                column: name.to_string(),
            })
    }

    pub fn get<'a>(&'a self, row: &'a [String], name: &str) -> Result<&'a str> {
        Ok(row[self.column_index(name)?].as_str())
    }

    pub fn parse<T: FromStr>(&self, row: &[String], name: &str) -> Result<T> {
        let text = self.get(row, name)?;
        text.parse().map_err(|_| {
            CliError::bundle(&self.path, format!("column `{name}`: cannot parse `{text}`"))
        })
    }

    /// Empty cells read as `None`.
    pub fn parse_opt<T: FromStr>(&self, row: &[String], name: &str) -> Result<Option<T>> {
        if self.get(row, name)?.is_empty() {
            Ok(None)
        } else {
            self.parse(row, name).map(Some)
        }
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        self.rows.iter().map(|r| self.parse(r, name)).collect()
    }
}

/// The effective configuration of a run plus `run.*` bookkeeping keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: RunConfig,
    pub run: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        let mut run = BTreeMap::new();
        run.insert("run.version".into(), env!("CARGO_PKG_VERSION").into());
        run.insert(
            "run.created".into(),
            chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        );
        Self { config, run }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.run.insert(format!("run.{key}"), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.run.get(&format!("run.{key}")).map(String::as_str)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = self.config.to_text();
        for (k, v) in &self.run {
            text.push_str(&format!("{k} = {}\n", v.replace('\n', " ")));
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, text).map_err(CliError::io(path))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        let mut config = RunConfig::default();
        let mut run = BTreeMap::new();
        for (k, v) in parse_pairs(&text)? {
            if k.starts_with("run.") {
                run.insert(k, v);
            } else {
                config.set(&k, &v)?;
            }
        }
        Ok(Self { config, run })
    }

    /// Designs fitted into this bundle, in fit order.
    pub fn designs(&self) -> Vec<String> {
        self.get("designs")
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}
