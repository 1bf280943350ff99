//! File formats: curve tables, model documents, plot-ready exports and run manifests.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

mod curves;
mod export;
mod manifest;
mod model_file;

pub use curves::{load_curves_csv, parse_curves_csv, write_curves_csv, write_latents_csv};
pub use export::{export_alignments, export_cluster_bands, load_cluster_bands, BandRow};
pub use manifest::{FileDigest, ManifestBuilder, RunManifest};
pub use model_file::{load_model, model_from_json, model_to_json, save_model, SCHEMA_VERSION};

/// Shortest decimal that parses back to the same `f64`; scientific notation
/// for very large or very small magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
