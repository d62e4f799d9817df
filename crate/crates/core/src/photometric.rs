//! Rain-density-driven brightness attenuation and rainy image composition.
//!
//! Ambient light follows Beer-Lambert decay, `L = L0 * exp(-gamma * density)`,
//! and the rainy frame is `O = L ⊙ (B + R * tint)` with `L` a per-channel
//! scalar broadcast over the image.

use crate::streak::RainMask;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_BASE_DENSITY: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotometricError {
    #[error("dimension mismatch: image {image:?} vs mask {mask:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("invalid light parameter: {0}")]
    InvalidLight(String),
}

/// RGB image with values normalized to `[0, 1]`, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize * 3);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize * 3])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn in_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Per-pixel luma as the mean of the three channels.
    pub fn luma(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0)
    }

    pub fn mean_luma(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.luma().sum::<f64>() / self.pixel_count() as f64
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mse(&self, other: &ImageBuffer) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / self.data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientLight(pub [f64; 3]);

impl AmbientLight {
    pub const WHITE: AmbientLight = AmbientLight([1.0; 3]);

    pub fn new(value: [f64; 3]) -> Result<Self, PhotometricError> {
        if value.iter().all(|v| *v > 0.0 && *v <= 1.0) {
            Ok(Self(value))
        } else {
            Err(PhotometricError::InvalidLight(format!(
                "ambient light {value:?} must lie in (0, 1]"
            )))
        }
    }
}

pub fn ambient_from_density(
    base: [f64; 3],
    gamma: f64,
    omega_den: f64,
) -> Result<AmbientLight, PhotometricError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(PhotometricError::InvalidLight(format!("gamma {gamma} must be >= 0")));
    }
    if !(omega_den >= 0.0 && omega_den.is_finite()) {
        return Err(PhotometricError::InvalidLight(format!(
            "density {omega_den} must be >= 0"
        )));
    }
    AmbientLight::new(base)?;
    let decay = (-gamma * omega_den).exp();
    // Extreme decay underflows to zero; keep the result a valid light.
    Ok(AmbientLight(base.map(|l| (l * decay).max(f64::MIN_POSITIVE))))
}

fn check_dims(background: &ImageBuffer, mask: &RainMask) -> Result<(), PhotometricError> {
    if background.width != mask.width || background.height != mask.height {
        return Err(PhotometricError::DimensionMismatch {
            image: (background.width, background.height),
            mask: (mask.width, mask.height),
        });
    }
    Ok(())
}

/// `clamp(L_c * (B_c + mask * tint_c), 0, 1)` per pixel and channel.
pub fn compose(
    background: &ImageBuffer,
    mask: &RainMask,
    light: &AmbientLight,
    rain_tint: [f64; 3],
) -> Result<ImageBuffer, PhotometricError> {
    check_dims(background, mask)?;
    let mut data = Vec::with_capacity(background.data.len());
    for (px, m) in background.data.chunks_exact(3).zip(&mask.values) {
        for c in 0..3 {
            data.push((light.0[c] * (px[c] + m * rain_tint[c])).clamp(0.0, 1.0));
        }
    }
    Ok(ImageBuffer::new(background.width, background.height, data))
}

/// Additive rain without brightness attenuation, `O = B + R`.
pub fn compose_legacy(
    background: &ImageBuffer,
    mask: &RainMask,
    rain_tint: [f64; 3],
) -> Result<ImageBuffer, PhotometricError> {
    compose(background, mask, &AmbientLight::WHITE, rain_tint)
}

/// Attenuates the background first and adds unattenuated rain on top,
/// `O = L ⊙ B + R`.
pub fn compose_prescaled(
    background: &ImageBuffer,
    mask: &RainMask,
    light: &AmbientLight,
    rain_tint: [f64; 3],
) -> Result<ImageBuffer, PhotometricError> {
    check_dims(background, mask)?;
    let mut data = Vec::with_capacity(background.data.len());
    for (px, m) in background.data.chunks_exact(3).zip(&mask.values) {
        for c in 0..3 {
            data.push((light.0[c] * px[c] + m * rain_tint[c]).clamp(0.0, 1.0));
        }
    }
    Ok(ImageBuffer::new(background.width, background.height, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RainPreset {
    Light,
    Moderate,
    Heavy,
}

impl RainPreset {
    pub const ALL: [RainPreset; 3] = [RainPreset::Light, RainPreset::Moderate, RainPreset::Heavy];

    pub fn density_multiplier(self) -> f64 {
        match self {
            RainPreset::Light => 1.0,
            RainPreset::Moderate => 3.0,
            RainPreset::Heavy => 6.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RainPreset::Light => "light",
            RainPreset::Moderate => "moderate",
            RainPreset::Heavy => "heavy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

pub fn preset_params(
    level: RainPreset,
    base: [f64; 3],
    gamma: f64,
    base_den: f64,
) -> Result<(f64, AmbientLight), PhotometricError> {
    if !(base_den > 0.0 && base_den.is_finite()) {
        return Err(PhotometricError::InvalidLight(format!(
            "base density {base_den} must be > 0"
        )));
    }
    let omega_den = base_den * level.density_multiplier();
    Ok((omega_den, ambient_from_density(base, gamma, omega_den)?))
}

/// Luma histogram with `bins` uniform bins over `[0, 1]`; luma 1.0 falls in
/// the last bin.
pub fn brightness_histogram(image: &ImageBuffer, bins: usize) -> Vec<u64> {
    assert!(bins >= 2, "histogram needs at least two bins");
    let mut counts = vec![0u64; bins];
    for l in image.luma() {
        let b = ((l * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}
