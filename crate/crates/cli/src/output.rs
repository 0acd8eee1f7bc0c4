use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::to_pretty_json;
use crate::failure::{CliResult, Failure};

pub fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Machine-readable report at `path` plus its aligned-text table next to it (`.txt`).
pub fn write_report<T: Serialize>(path: &Path, report: &T, table: &str) -> CliResult {
    write_text(path, &to_pretty_json(report))?;
    write_text(&path.with_extension("txt"), table)
}
