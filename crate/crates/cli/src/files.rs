//! File loading, saving and directory pairing for the commands.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pps_core::segmap::{parse_ppsm, to_ppsm_bytes, PanopticPartMap};
use pps_core::taxonomy::Taxonomy;

use crate::CliError;

fn read_error(path: &Path, err: &std::io::Error) -> CliError {
    let message = format!("cannot read {}: {err}", path.display());
    if err.kind() == ErrorKind::NotFound {
        CliError::MissingInput(message)
    } else {
        CliError::Format(message)
    }
}

pub fn load_taxonomy(path: &Path) -> Result<Arc<Taxonomy>, CliError> {
    let text = fs::read_to_string(path).map_err(|err| read_error(path, &err))?;
    let taxonomy = Taxonomy::from_json(&text)
        .map_err(|err| CliError::Format(format!("{}: {err}", path.display())))?;
    Ok(Arc::new(taxonomy))
}

pub fn load_map(path: &Path) -> Result<PanopticPartMap, CliError> {
    let bytes = fs::read(path).map_err(|err| read_error(path, &err))?;
    parse_ppsm(&bytes).map_err(|err| CliError::Format(format!("{}: {err}", path.display())))
}

pub fn save_map(path: &Path, map: &PanopticPartMap) -> Result<(), CliError> {
    write_bytes(path, &to_ppsm_bytes(map))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|err| CliError::Format(format!("cannot create {}: {err}", parent.display())))?;
        }
    }
    fs::write(path, bytes)
        .map_err(|err| CliError::Format(format!("cannot write {}: {err}", path.display())))
}

/// Maps each `*.ppsm` file stem in a directory to its path.
fn ppsm_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|err| read_error(dir, &err))?;
    let mut stems = BTreeMap::new();
    for entry in entries {
        let entry =
            entry.map_err(|err| CliError::Format(format!("{}: {err}", dir.display())))?;
        let path = entry.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("ppsm") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.insert(stem.to_string(), path);
        }
    }
    Ok(stems)
}

fn describe_missing(stems: &BTreeMap<String, PathBuf>, other: &BTreeMap<String, PathBuf>) -> String {
    let missing: Vec<&str> =
        stems.keys().filter(|k| !other.contains_key(*k)).take(5).map(String::as_str).collect();
    missing.join(", ")
}

/// Pairs the `*.ppsm` files of several directories by file stem. Every
/// directory must contain exactly the same stems; the result is one row per
/// stem, in stem order, with one path per directory.
pub fn pair_directories(dirs: &[&Path]) -> Result<Vec<(String, Vec<PathBuf>)>, CliError> {
    let mut maps = Vec::with_capacity(dirs.len());
    for dir in dirs {
        maps.push(ppsm_stems(dir)?);
    }
    let first = &maps[0];
    for (dir, map) in dirs.iter().zip(&maps).skip(1) {
        if map.len() != first.len() || !map.keys().eq(first.keys()) {
            return Err(CliError::MissingInput(format!(
                "{} and {} do not pair up: [{}] have no counterpart in the first, [{}] in the second",
                dirs[0].display(),
                dir.display(),
                describe_missing(first, map),
                describe_missing(map, first),
            )));
        }
    }
    if first.is_empty() {
        return Err(CliError::MissingInput(format!(
            "no .ppsm files found in {}",
            dirs[0].display()
        )));
    }
    let stems: Vec<String> = first.keys().cloned().collect();
    Ok(stems
        .into_iter()
        .map(|stem| {
            let paths = maps.iter().map(|m| m[&stem].clone()).collect();
            (stem, paths)
        })
        .collect())
}
