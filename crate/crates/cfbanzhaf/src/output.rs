//! CSV output with a JSON mirror next to it.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::formats::{to_json_string, write_atomic};

/// One row per element, header from the field names. Floats use the shortest
/// round-tripping representation, so equal values always print identically.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Config(e.to_string()))
}

/// `results.csv` is mirrored by `results.json`.
pub fn mirror_path(csv_path: &Path) -> Result<PathBuf> {
    let mirror = csv_path.with_extension("json");
    if mirror == csv_path {
        return Err(HarnessError::Config(format!(
            "{} would be overwritten by its own JSON mirror",
            csv_path.display()
        )));
    }
    Ok(mirror)
}

pub fn write_csv_and_mirror<T: Serialize, J: Serialize>(csv_path: &Path, rows: &[T], mirror: &J) -> Result<PathBuf> {
    let json_path = mirror_path(csv_path)?;
    write_atomic(csv_path, csv_string(rows)?.as_bytes())?;
    write_atomic(&json_path, to_json_string(mirror)?.as_bytes())?;
    Ok(json_path)
}
