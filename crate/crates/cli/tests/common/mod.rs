//! Shared on-disk fixture helpers for the command tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use pps_core::segmap::{to_ppsm_bytes, PanopticPartMap};
use pps_core::taxonomy::Taxonomy;

pub fn write_taxonomy_file(dir: &Path, taxonomy: &Taxonomy) -> PathBuf {
    let path = dir.join("taxonomy.json");
    let json = serde_json::to_string_pretty(&taxonomy.to_doc()).unwrap();
    fs::write(&path, json).unwrap();
    path
}

/// Writes `maps` into `dir/name` as img000.ppsm, img001.ppsm and so on.
pub fn write_map_dir(dir: &Path, name: &str, maps: &[PanopticPartMap]) -> PathBuf {
    let sub = dir.join(name);
    fs::create_dir_all(&sub).unwrap();
    for (index, map) in maps.iter().enumerate() {
        fs::write(sub.join(format!("img{index:03}.ppsm")), to_ppsm_bytes(map)).unwrap();
    }
    sub
}

/// Runs the command line and returns its exit code.
pub fn exit_code(args: &[&str]) -> i32 {
    pps_cli::run(args.iter().map(|s| s.to_string()))
}

pub fn path_str(path: &Path) -> &str {
    path.to_str().expect("fixture paths are valid UTF-8")
}
