//! Configuration, file formats and reports.

pub mod config;
pub mod field;
pub mod report;

pub use config::{
    load_config, parse_config, ConfigError, GridKind, Pick, Positions, RefinePolicy, RunConfig, Schedule,
};
pub use field::{format_field, parse_field, read_field, write_field, FieldError};
pub use report::{format_sweep_csv, sweep_rows, write_sweep_csv, Report, Stage, StageStatus, SweepRow, SWEEP_COLUMNS};

use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable naming the directory for Green-correction caches.
pub const CACHE_DIR_VAR: &str = "VORTEXLAB_CACHE_DIR";

/// The cache directory from [`CACHE_DIR_VAR`], if set and non-empty.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
