//! Config-file layering and guarded output files.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// An error caused by how the tool was invoked; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Values from the JSON file at `config`, overridden by every flag that was
/// given on the command line.
pub fn layered<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let flag_values = serde_json::to_value(flags)?;
    let Some(path) = config else {
        return Ok(serde_json::from_value(flag_values)?);
    };
    let file = File::open(path).with_context(|| format!("opening config {}", path.display()))?;
    let mut merged: serde_json::Value = serde_json::from_reader(io::BufReader::new(file))
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
    let Some(base) = merged.as_object_mut() else {
        return usage(format!("config {} must hold a JSON object", path.display()));
    };
    if let serde_json::Value::Object(over) = flag_values {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

/// `data.csv` -> `data.<suffix>`, next to the main output.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

/// Refuses, before any work starts, to clobber existing files.
pub fn check_writable(paths: &[&Path], force: bool) -> Result<()> {
    for p in paths {
        if p.exists() && !force {
            return usage(format!("{} exists; pass --force to overwrite", p.display()));
        }
    }
    Ok(())
}

/// A file when a path is given, stdout otherwise.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = open_output(Some(path))?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(open_output(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
