//! File formats: JSON motion and body files, ASCII PLY clouds and meshes,
//! CSV tables, the binary fusion-weights container and synthetic bundle
//! directories.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! text format reads back bit-identical values.

mod body;
mod bundle;
mod motion;
mod ply;
mod tables;
mod weights;

use std::path::Path;

use crate::error::Result;

pub use body::{body_from_str, body_to_string, read_body, write_body, BODY_FORMAT_VERSION};
pub use bundle::{
    cloud_file_name, read_bundle, read_manifest, write_bundle, BundleFiles, BundleManifest,
    LoadedBundle, BUNDLE_FORMAT_VERSION, MANIFEST_FILE,
};
pub use motion::{
    motion_from_str, motion_to_string, read_motion, write_motion, MOTION_FORMAT_VERSION,
};
pub use ply::{
    cloud_from_ply, cloud_to_ply, mesh_from_ply, mesh_to_ply, read_cloud, read_mesh, write_cloud,
    write_mesh,
};
pub use tables::{
    events_from_csv, events_to_csv, features_from_csv, features_to_csv, history_to_csv,
    imu_poses_from_csv, imu_poses_to_csv, read_events, read_features, read_series, report_to_csv,
    series_from_csv, series_to_csv, write_features,
};
pub use weights::{
    decode_units, encode_units, read_tumm_weights, write_tumm_weights, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

/// Writes `text`, creating missing parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::fs::write(path, bytes)?)
}

/// Runs `fill` on a fresh staging directory next to `dest` and moves its
/// entries into `dest` only if `fill` succeeds, so a failure leaves `dest`
/// untouched.
pub fn write_staged(dest: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let name = dest
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let parent = dest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = fill(&staging).and_then(|()| {
        std::fs::create_dir_all(dest)?;
        for entry in std::fs::read_dir(&staging)? {
            let entry = entry?;
            let target = dest.join(entry.file_name());
            if target.is_dir() {
                std::fs::remove_dir_all(&target)?;
            }
            std::fs::rename(entry.path(), target)?;
        }
        Ok(())
    });
    let _ = std::fs::remove_dir_all(&staging);
    result
}
