use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::commands::CliError;

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Usage(format!("serializing output: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn csv<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Usage(format!("writing CSV: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("writing CSV: {e}")))
}

pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::Usage(format!("stdout: {e}")))
        }
    }
}

/// Optional floats as CSV cells: empty when absent.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
