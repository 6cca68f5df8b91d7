pub mod fit;
pub mod invert;
pub mod locate;
pub mod plotdata;
pub mod simulate;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{read_file, CliError, CliResult, FORMAT_VERSION};

/// One fluorescence/transmission pair. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub power_w: f64,
    pub fluorescence: String,
    pub transmission: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_file(path)?;
        let m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "{}: unsupported format_version {}",
                path.display(),
                m.format_version
            )));
        }
        if m.entries.is_empty() {
            return Err(CliError::usage(format!(
                "{}: manifest has no entries",
                path.display()
            )));
        }
        for (i, e) in m.entries.iter().enumerate() {
            if !(e.power_w.is_finite() && e.power_w >= 0.0) {
                return Err(CliError::usage(format!(
                    "{}: entries[{i}].power_w must be finite and >= 0",
                    path.display()
                )));
            }
        }
        Ok(m)
    }
}

/// Resolves `file` against the directory holding `anchor`.
pub fn relative_to(anchor: &Path, file: &str) -> PathBuf {
    match anchor.parent() {
        Some(dir) => dir.join(file),
        None => PathBuf::from(file),
    }
}
