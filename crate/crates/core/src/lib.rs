//! Multi-view consistent rain synthesis for posed image collections, plus
//! curve-based brightness recovery.
//!
//! The pipeline reads COLMAP poses, simulates a persistent 3D rain field,
//! renders per-view streak masks, attenuates ambient light with rain
//! density and composites rainy frames. [`recovery`] fits recursive
//! brightness curves that undo the attenuation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod colmap;
pub mod photometric;
pub mod rain;
pub mod recovery;
pub mod pipeline;
pub mod streak;

pub use camera::{project, unproject, view_angles, view_direction, Camera, Intrinsics, Pose, Vec2, Vec3, ViewAngles};
pub use colmap::{CameraRecord, ColmapError, ImageRecord, ViewpointMatrix};
pub use photometric::{AmbientLight, ImageBuffer, RainPreset};
pub use rain::{RainParams, RainVolume, Raindrop};
pub use recovery::{CurveParams, EnhancementTrace, FitSettings, Objective};
pub use streak::{RainMask, Streak, StreakSettings};
