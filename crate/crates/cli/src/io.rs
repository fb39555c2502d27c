use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Arg(String),
    #[error(transparent)]
    Order(#[from] convex_order::order::OrderError),
    #[error(transparent)]
    Geometry(#[from] convex_order::geometry::GeometryError),
    #[error(transparent)]
    Sim(#[from] convex_order::sim::SimError),
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    fs::write(path, text + "\n").map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes an output file. A failed write is reported but does not change the
/// exit status, which reflects the verdict alone.
pub fn emit<T: Serialize>(path: &Path, value: &T) {
    if let Err(e) = write_json(path, value) {
        eprintln!("warning: {e}");
    }
}

/// Parses `"1.5,-2"` into coordinates.
pub fn parse_point(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Arg(format!("bad coordinate {t:?} in {s:?}")))
        })
        .collect()
}
