//! Scene manifest: the JSON record of everything a synthesis run wrote.
//!
//! Keys appear in the order of the struct fields below. Paths are relative
//! to the manifest's directory, digests are lowercase hex SHA-256 of the
//! file bytes, angles are radians.

use super::config::JobConfig;
use super::{PipelineError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RAINY_DIR: &str = "rainy";
pub const MASK_DIR: &str = "masks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub seed: u64,
    pub drop_capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_name: String,
    pub view_id: String,
    pub elevation: f64,
    pub azimuth: f64,
    pub frame_index: usize,
    pub frame_time: f64,
    /// `light`, `moderate`, `heavy`, or `custom` when no presets are set.
    pub preset: String,
    pub omega_den: f64,
    pub ambient: [f64; 3],
    pub rainy_path: String,
    pub rainy_digest: String,
    pub mask_path: String,
    pub mask_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_name: String,
    pub engine_version: String,
    pub config: JobConfig,
    pub volume: VolumeRecord,
    pub entries: Vec<ManifestEntry>,
}

impl SceneManifest {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(PipelineError::ManifestMissing(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(PipelineError::io(path))?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::ManifestInvalid {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Output file stem for an image name: directory separators flattened and
/// the extension dropped.
pub fn output_stem(image_name: &str) -> String {
    let flat = image_name.replace(['/', '\\'], "_");
    match flat.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ => flat,
    }
}

pub fn output_file_name(image_name: &str, preset: &str, frame_index: usize) -> String {
    format!("{}__{preset}__t{frame_index:03}.png", output_stem(image_name))
}
