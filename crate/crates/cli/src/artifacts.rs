//! Write-once output files and number formatting.

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::Path;

use serde_json::json;

use crate::CliError;

/// Full precision: 17 significant digits.
pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    let message = if e.kind() == ErrorKind::AlreadyExists {
        format!("{} already exists; artifacts are never overwritten", path.display())
    } else {
        format!("cannot write {}: {e}", path.display())
    };
    CliError::Io {
        message,
        context: json!({ "path": path.display().to_string() }),
    }
}

/// Creates `path` (which must not exist yet) and writes `bytes` to it.
pub(crate) fn write_new(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| io_error(path, e))?;
    file.write_all(bytes).map_err(|e| io_error(path, e))
}

/// Writes to `path`, or to stdout when no path is given.
pub(crate) fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => write_new(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

pub(crate) fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Io {
        message: format!("csv encoding failed: {e}"),
        context: serde_json::Value::Null,
    };
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Io {
        message: format!("csv encoding failed: {e}"),
        context: serde_json::Value::Null,
    })
}

pub(crate) fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s.into_bytes()
}
