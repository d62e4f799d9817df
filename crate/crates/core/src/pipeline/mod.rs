//! Orchestration: configuration, scene loading, synthesis, validation,
//! per-image enhancement and pose inspection.

pub mod config;
pub mod enhance;
pub mod imageio;
pub mod inspect;
pub mod manifest;
pub mod synthesize;
pub mod validate;

use crate::camera::GeometryError;
use crate::colmap::ColmapError;
use crate::photometric::PhotometricError;
use crate::rain::RainError;
use crate::recovery::RecoveryError;
pub use config::{load_config, ConfigError, JobConfig};
pub use enhance::{enhance_images, EnhanceMode, EnhanceOptions, EnhanceRecord};
pub use inspect::{format_pose_table, inspect_poses, PoseRow};
pub use manifest::{ManifestEntry, SceneManifest};
use std::path::{Path, PathBuf};
pub use synthesize::{load_scene, synthesize, Scene, SceneView};
use thiserror::Error;
pub use validate::{validate, ValidationReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rain(#[from] RainError),
    #[error(transparent)]
    Photometric(#[from] PhotometricError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("background {name} is {got:?}, camera expects {expected:?}")]
    BackgroundSize {
        name: String,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("manifest not found: {0}")]
    ManifestMissing(PathBuf),
    #[error("manifest {path}: {reason}")]
    ManifestInvalid { path: PathBuf, reason: String },
    #[error("output directory {0} exists and is not a previous scene")]
    OutputNotEmpty(PathBuf),
    #[error("view {view}, frame {frame}, preset {preset}: {source}")]
    Item {
        view: String,
        frame: usize,
        preset: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit status: 2 for usage or configuration problems, 3 for
    /// I/O and parse failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Usage(_) | PipelineError::OutputNotEmpty(_) => 2,
            PipelineError::Recovery(RecoveryError::InvalidSettings(_)) => 2,
            PipelineError::Item { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn image(path: &Path) -> impl FnOnce(image::ImageError) -> PipelineError + '_ {
        move |source| PipelineError::Image {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(PipelineError::Usage("thread count must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Usage(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
