//! Patch directories: either flat, or one subdirectory per label.

use std::fs;
use std::path::{Path, PathBuf};

use slideqa_core::slide_io::{self, Patch};
use slideqa_core::Label;

use crate::error::CliError;

pub struct PatchEntry {
    pub path: PathBuf,
    pub label: Option<Label>,
}

fn is_raster(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        out.push(entry.map_err(|e| CliError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// List raster files. Subdirectories must be named after a label; files
/// inside them carry that label.
pub fn scan(dir: &Path) -> Result<Vec<PatchEntry>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", dir.display())));
    }
    let mut entries = Vec::new();
    for path in sorted_entries(dir)? {
        if path.is_dir() {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let label: Label = name
                .parse()
                .map_err(|_| CliError::usage(format!("unknown label directory `{name}`")))?;
            for file in sorted_entries(&path)? {
                if file.is_file() && is_raster(&file) {
                    entries.push(PatchEntry { path: file, label: Some(label) });
                }
            }
        } else if is_raster(&path) {
            entries.push(PatchEntry { path, label: None });
        }
    }
    if entries.is_empty() {
        return Err(CliError::usage(format!("no PNG or PPM patches under {}", dir.display())));
    }
    Ok(entries)
}

/// Decode every entry, dropping unreadable or non-square files. Returns
/// the survivors and the number skipped.
pub fn load(entries: Vec<PatchEntry>) -> (Vec<(PatchEntry, Patch)>, usize) {
    let mut loaded = Vec::with_capacity(entries.len());
    let mut skipped = 0;
    for entry in entries {
        match slide_io::load_image(&entry.path).and_then(|img| Patch::from_image(&img)) {
            Ok(patch) => loaded.push((entry, patch)),
            Err(err) => {
                eprintln!("warning: skipping {}: {err}", entry.path.display());
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} unreadable patch(es)");
    }
    (loaded, skipped)
}
