//! Deterministic rain particle field.
//!
//! Every drop is a pure function of `(seed, drop_id)`: its initial position
//! and diameter come from a counter-based hash, so drops keep their identity
//! across frames and views and can be generated in any order.

use crate::camera::{horizontal_basis, validate_up, Camera, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RainError {
    #[error("invalid rain parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("invalid rain volume: {0}")]
    InvalidVolume(String),
    #[error("cannot build a rain volume from an empty camera set")]
    EmptyCameraSet,
}

/// Rain model parameters: density, depth, wind strength and direction,
/// particle cap and drop scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainParams {
    /// Drops per cubic meter.
    pub omega_den: f64,
    /// Maximum render depth in meters.
    pub omega_dep: f64,
    /// Wind speed in m/s.
    pub omega_str: f64,
    /// Wind azimuth in radians, measured like camera azimuth.
    pub omega_dir: f64,
    /// Hard cap on the number of particles.
    pub omega_qty: u64,
    /// Drop size multiplier.
    pub omega_scl: f64,
}

impl Default for RainParams {
    fn default() -> Self {
        Self {
            omega_den: 0.1,
            omega_dep: 20.0,
            omega_str: 0.0,
            omega_dir: 0.0,
            omega_qty: 200_000,
            omega_scl: 1.0,
        }
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<(), RainError> {
        let bad = |name, reason: &str| {
            Err(RainError::InvalidParam {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.omega_den >= 0.0 && self.omega_den.is_finite()) {
            return bad("omega_den", "must be finite and >= 0");
        }
        if !(self.omega_dep > 0.0 && self.omega_dep.is_finite()) {
            return bad("omega_dep", "must be finite and > 0");
        }
        if !(self.omega_str >= 0.0 && self.omega_str.is_finite()) {
            return bad("omega_str", "must be finite and >= 0");
        }
        if !self.omega_dir.is_finite() {
            return bad("omega_dir", "must be finite");
        }
        if self.omega_qty == 0 {
            return bad("omega_qty", "must be positive");
        }
        if !(self.omega_scl > 0.0 && self.omega_scl <= 100.0) {
            return bad("omega_scl", "must lie in (0, 100]");
        }
        Ok(())
    }

    pub fn with_density(mut self, omega_den: f64) -> Self {
        self.omega_den = omega_den;
        self
    }
}

/// Axis-aligned world box the rain lives in. Positions wrap around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainVolume {
    pub min: Vec3,
    pub max: Vec3,
    pub seed: u64,
    /// World up-vector; drops fall along `-up` and wind blows orthogonal to it.
    pub up: Vec3,
}

impl RainVolume {
    pub fn new(min: Vec3, max: Vec3, seed: u64, up: Vec3) -> Result<Self, RainError> {
        if !(0..3).all(|i| min[i].is_finite() && max[i].is_finite() && min[i] < max[i]) {
            return Err(RainError::InvalidVolume(format!(
                "min {min:?} must be componentwise below max {max:?}"
            )));
        }
        validate_up(&up).map_err(|e| RainError::InvalidVolume(e.to_string()))?;
        Ok(Self { min, max, seed, up })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] < self.max[i])
    }

    /// Componentwise torus wrap into `[min, max)`. Points already inside are
    /// returned unchanged.
    pub fn wrap(&self, p: &Vec3) -> Vec3 {
        let mut out = *p;
        for i in 0..3 {
            let (lo, hi) = (self.min[i], self.max[i]);
            if out[i] >= lo && out[i] < hi {
                continue;
            }
            let ext = hi - lo;
            let mut r = (out[i] - lo).rem_euclid(ext);
            if r >= ext {
                r = 0.0;
            }
            let v = lo + r;
            out[i] = if v < hi { v } else { lo };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Raindrop {
    pub drop_id: u64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Millimeters.
    pub diameter: f64,
}

pub const MIN_DIAMETER_MM: f64 = 0.125;
pub const MAX_DIAMETER_MM: f64 = 10.0;
pub const MIN_FALL_SPEED: f64 = 0.5;

/// Empirical terminal fall speed in m/s for a drop of `diameter_mm`,
/// `9.65 - 10.3 exp(-0.6 D)`, floored at 0.5 m/s.
pub fn terminal_velocity(diameter_mm: f64) -> f64 {
    (9.65 - 10.3 * (-0.6 * diameter_mm).exp()).max(MIN_FALL_SPEED)
}

pub fn drop_count(params: &RainParams, volume: &RainVolume) -> u64 {
    let expected = (params.omega_den * volume.volume()).round();
    if expected <= 0.0 {
        return 0;
    }
    // Saturating float-to-int conversion keeps absurd products at u64::MAX.
    (expected as u64).min(params.omega_qty)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` for the `stream`-th draw of drop `index`.
fn unit_sample(seed: u64, index: u64, stream: u64) -> f64 {
    let h = splitmix64(splitmix64(seed ^ splitmix64(index)).wrapping_add(stream));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn initial_drop(params: &RainParams, volume: &RainVolume, id: u64, wind: &Vec3) -> Raindrop {
    let ext = volume.extent();
    let mut position = Vec3::zeros();
    for axis in 0..3 {
        let u = unit_sample(volume.seed, id, axis as u64);
        position[axis] = volume.min[axis] + u * ext[axis];
    }
    // Guard against `min + u * ext` rounding up onto `max`.
    let position = volume.wrap(&position);
    let u = unit_sample(volume.seed, id, 3);
    let diameter = (params.omega_scl * (0.5 + u)).clamp(MIN_DIAMETER_MM, MAX_DIAMETER_MM);
    let velocity = -volume.up * terminal_velocity(diameter) + wind;
    Raindrop {
        drop_id: id,
        position,
        velocity,
        diameter,
    }
}

fn wind_vector(params: &RainParams, up: &Vec3) -> Vec3 {
    let (e1, e2) = horizontal_basis(up);
    (e1 * params.omega_dir.cos() + e2 * params.omega_dir.sin()) * params.omega_str
}

/// All drops of the field at `time`, ordered by `drop_id`.
pub fn sample_drops(params: &RainParams, volume: &RainVolume, time: f64) -> Vec<Raindrop> {
    let wind = wind_vector(params, &volume.up);
    (0..drop_count(params, volume))
        .map(|id| advance(&initial_drop(params, volume, id, &wind), time, volume))
        .collect()
}

pub fn advance(drop: &Raindrop, dt: f64, volume: &RainVolume) -> Raindrop {
    Raindrop {
        position: volume.wrap(&(drop.position + drop.velocity * dt)),
        ..*drop
    }
}

/// Box covering every camera center and its far-plane frustum corners at
/// `omega_dep`, grown by `margin` on all sides.
pub fn volume_from_cameras(
    cameras: &[Camera],
    omega_dep: f64,
    margin: f64,
    seed: u64,
    up: Vec3,
) -> Result<RainVolume, RainError> {
    if cameras.is_empty() {
        return Err(RainError::EmptyCameraSet);
    }
    if !(margin >= 0.0 && margin.is_finite() && omega_dep > 0.0 && omega_dep.is_finite()) {
        return Err(RainError::InvalidVolume(format!(
            "margin {margin} and depth {omega_dep} must be nonnegative and finite"
        )));
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut include = |p: Vec3| {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    };
    for cam in cameras {
        include(cam.center());
        let k = &cam.intrinsics;
        let (w, h) = (k.width as f64, k.height as f64);
        for (u, v) in [(k.cx, k.cy), (0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let ray = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            include(cam.pose.camera_to_world(&(ray * omega_dep)));
        }
    }
    RainVolume::new(lo.add_scalar(-margin), hi.add_scalar(margin), seed, up)
}
