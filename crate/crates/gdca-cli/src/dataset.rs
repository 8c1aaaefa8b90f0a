//! Dataset directory handling: `.ppm` files in lexicographic filename
//! order. The order is part of the training determinism contract, so it is
//! fixed here rather than left to the filesystem.

use std::fs;
use std::path::{Path, PathBuf};

use gdca_core::image::Image;

use crate::ppm;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DatasetError(pub String);

/// All `.ppm` files directly inside `dir`, sorted by file name.
pub fn list_ppm_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| DatasetError(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().map(|e| e == "ppm").unwrap_or(false))
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    Ok(files)
}

/// Loads every image in the directory, keyed by file name.
pub fn load_images(dir: &Path) -> Result<Vec<(String, Image)>, DatasetError> {
    let mut out = Vec::new();
    for path in list_ppm_files(dir)? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let img = ppm::read_file(&path).map_err(|e| DatasetError(e.0))?;
        out.push((name, img));
    }
    Ok(out)
}
