//! Artifact writers with stable bytes.
//!
//! JSON goes through `serde_json` pretty printing with a trailing newline;
//! struct fields serialize in declaration order, so equal values always
//! produce equal bytes. CSV goes through the `csv` crate with a header row
//! and shortest-round-trip float formatting. Nothing here writes clocks,
//! hostnames, or absolute paths into an artifact.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{usage, RunResult};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> RunResult<()> {
    let mut buf = serde_json::to_vec_pretty(value)
        .with_context(|| format!("serializing {}", path.display()))
        .map_err(usage)?;
    buf.push(b'\n');
    fs::write(path, buf)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> RunResult<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(usage)
}

/// Serialize one record type to CSV with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> RunResult<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(usage)?;
    for row in rows {
        w.serialize(row)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(usage)?;
    }
    w.flush()
        .with_context(|| format!("flushing {}", path.display()))
        .map_err(usage)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> RunResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(usage)?;
    r.deserialize()
        .map(|row| {
            row.with_context(|| format!("parsing {}", path.display()))
                .map_err(usage)
        })
        .collect()
}

/// Create the output directory and return it.
pub fn ensure_out_dir(dir: &Path) -> RunResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(usage)
}
