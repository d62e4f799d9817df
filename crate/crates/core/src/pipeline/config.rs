//! Job configuration: a flat TOML file of typed keys.
//!
//! | key              | type        | default            |
//! |------------------|-------------|--------------------|
//! | `scene_name`     | string      | output dir name    |
//! | `colmap_dir`     | path        | required           |
//! | `background_dir` | path        | required           |
//! | `output_dir`     | path        | required           |
//! | `seed`           | integer     | required           |
//! | `rain_density`   | float       | 0.1 drops/m³       |
//! | `rain_depth`     | float       | 20.0 m             |
//! | `wind_strength`  | float       | 0.0 m/s            |
//! | `wind_direction` | float       | 0.0 rad            |
//! | `rain_quantity`  | integer     | 200000             |
//! | `rain_scale`     | float       | 1.0                |
//! | `ambient_base`   | [f; 3]      | [1, 1, 1]          |
//! | `gamma`          | float       | 0.5                |
//! | `presets`        | [string]    | none (single run)  |
//! | `exposure`       | float       | 1/60 s             |
//! | `near`           | float       | 0.1 m              |
//! | `up`             | [f; 3]      | [0, -1, 0]         |
//! | `frame_times`    | [float]     | [0.0]              |
//! | `rain_tint`      | [f; 3]      | [1, 1, 1]          |
//! | `volume_margin`  | float       | 1.0 m              |
//!
//! When `presets` is set, `rain_density` is the base density multiplied by
//! 1, 3 and 6 for light, moderate and heavy rain. Relative paths resolve
//! against the directory holding the config file. Unknown keys are errors.

use crate::camera::{validate_up, Vec3, DEFAULT_UP};
use crate::photometric::{RainPreset, DEFAULT_GAMMA};
use crate::rain::RainParams;
use crate::streak::{DEFAULT_EXPOSURE, DEFAULT_NEAR};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config key `{key}`: {reason}")]
    Parse { key: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        key: key.to_string(),
        reason: reason.into(),
    }
}

const KEYS: &[&str] = &[
    "scene_name",
    "colmap_dir",
    "background_dir",
    "output_dir",
    "seed",
    "rain_density",
    "rain_depth",
    "wind_strength",
    "wind_direction",
    "rain_quantity",
    "rain_scale",
    "ambient_base",
    "gamma",
    "presets",
    "exposure",
    "near",
    "up",
    "frame_times",
    "rain_tint",
    "volume_margin",
];

/// Fully validated job description. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub scene_name: String,
    pub colmap_dir: PathBuf,
    pub background_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub rain_density: f64,
    pub rain_depth: f64,
    pub wind_strength: f64,
    pub wind_direction: f64,
    pub rain_quantity: u64,
    pub rain_scale: f64,
    pub ambient_base: [f64; 3],
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presets: Option<Vec<RainPreset>>,
    pub exposure: f64,
    pub near: f64,
    pub up: [f64; 3],
    pub frame_times: Vec<f64>,
    pub rain_tint: [f64; 3],
    pub volume_margin: f64,
}

struct RawConfig {
    scene_name: Option<String>,
    colmap_dir: Option<PathBuf>,
    background_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    seed: Option<i64>,
    rain_density: Option<f64>,
    rain_depth: Option<f64>,
    wind_strength: Option<f64>,
    wind_direction: Option<f64>,
    rain_quantity: Option<i64>,
    rain_scale: Option<f64>,
    ambient_base: Option<Vec<f64>>,
    gamma: Option<f64>,
    presets: Option<Vec<String>>,
    exposure: Option<f64>,
    near: Option<f64>,
    up: Option<Vec<f64>>,
    frame_times: Option<Vec<f64>>,
    rain_tint: Option<Vec<f64>>,
    volume_margin: Option<f64>,
}

fn triple(key: &str, v: Option<Vec<f64>>, default: [f64; 3]) -> Result<[f64; 3], ConfigError> {
    match v {
        None => Ok(default),
        Some(v) => <[f64; 3]>::try_from(v.as_slice())
            .map_err(|_| bad(key, format!("expected 3 numbers, got {}", v.len()))),
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl JobConfig {
    pub fn rain_params(&self) -> RainParams {
        RainParams {
            omega_den: self.rain_density,
            omega_dep: self.rain_depth,
            omega_str: self.wind_strength,
            omega_dir: self.wind_direction,
            omega_qty: self.rain_quantity,
            omega_scl: self.rain_scale,
        }
    }

    pub fn up_vector(&self) -> Vec3 {
        Vec3::from(self.up)
    }

    /// Parses config text. Relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| bad("<file>", e.message().to_string()))?;
        if let Some(k) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        fn get<T: serde::de::DeserializeOwned>(table: &toml::Table, key: &str) -> Result<Option<T>, ConfigError> {
            table
                .get(key)
                .map(|v| v.clone().try_into().map_err(|e: toml::de::Error| bad(key, e.message().to_string())))
                .transpose()
        }
        let t = &table;
        let raw = RawConfig {
            scene_name: get(t, "scene_name")?,
            colmap_dir: get(t, "colmap_dir")?,
            background_dir: get(t, "background_dir")?,
            output_dir: get(t, "output_dir")?,
            seed: get(t, "seed")?,
            rain_density: get(t, "rain_density")?,
            rain_depth: get(t, "rain_depth")?,
            wind_strength: get(t, "wind_strength")?,
            wind_direction: get(t, "wind_direction")?,
            rain_quantity: get(t, "rain_quantity")?,
            rain_scale: get(t, "rain_scale")?,
            ambient_base: get(t, "ambient_base")?,
            gamma: get(t, "gamma")?,
            presets: get(t, "presets")?,
            exposure: get(t, "exposure")?,
            near: get(t, "near")?,
            up: get(t, "up")?,
            frame_times: get(t, "frame_times")?,
            rain_tint: get(t, "rain_tint")?,
            volume_margin: get(t, "volume_margin")?,
        };
        Self::from_raw(raw, base_dir)
    }

    fn from_raw(raw: RawConfig, base: &Path) -> Result<Self, ConfigError> {
        let required = |v: Option<PathBuf>, key: &str| v.map(|p| resolve(base, p)).ok_or_else(|| bad(key, "required"));
        let colmap_dir = required(raw.colmap_dir, "colmap_dir")?;
        let background_dir = required(raw.background_dir, "background_dir")?;
        let output_dir = required(raw.output_dir, "output_dir")?;
        let seed = raw.seed.ok_or_else(|| bad("seed", "required"))?;
        let seed = u64::try_from(seed).map_err(|_| bad("seed", "must be nonnegative"))?;
        let scene_name = match raw.scene_name {
            Some(s) => s,
            None => output_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scene".into()),
        };
        let defaults = RainParams::default();
        let rain_quantity = match raw.rain_quantity {
            None => defaults.omega_qty,
            Some(q) if q > 0 => q as u64,
            Some(_) => return Err(bad("rain_quantity", "must be positive")),
        };
        let presets = match raw.presets {
            None => None,
            Some(names) => {
                let mut out = Vec::new();
                for n in &names {
                    let p = RainPreset::parse(n)
                        .ok_or_else(|| bad("presets", format!("unknown preset {n:?}")))?;
                    if out.contains(&p) {
                        return Err(bad("presets", format!("duplicate preset {n:?}")));
                    }
                    out.push(p);
                }
                if out.is_empty() {
                    return Err(bad("presets", "must not be empty when given"));
                }
                out.sort();
                Some(out)
            }
        };
        let cfg = JobConfig {
            scene_name,
            colmap_dir,
            background_dir,
            output_dir,
            seed,
            rain_density: raw.rain_density.unwrap_or(defaults.omega_den),
            rain_depth: raw.rain_depth.unwrap_or(defaults.omega_dep),
            wind_strength: raw.wind_strength.unwrap_or(defaults.omega_str),
            wind_direction: raw.wind_direction.unwrap_or(defaults.omega_dir),
            rain_quantity,
            rain_scale: raw.rain_scale.unwrap_or(defaults.omega_scl),
            ambient_base: triple("ambient_base", raw.ambient_base, [1.0; 3])?,
            gamma: raw.gamma.unwrap_or(DEFAULT_GAMMA),
            presets,
            exposure: raw.exposure.unwrap_or(DEFAULT_EXPOSURE),
            near: raw.near.unwrap_or(DEFAULT_NEAR),
            up: triple("up", raw.up, DEFAULT_UP)?,
            frame_times: raw.frame_times.unwrap_or_else(|| vec![0.0]),
            rain_tint: triple("rain_tint", raw.rain_tint, [1.0; 3])?,
            volume_margin: raw.volume_margin.unwrap_or(1.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.rain_params();
        if let Err(crate::rain::RainError::InvalidParam { name, reason }) = p.validate() {
            let key = match name {
                "omega_den" => "rain_density",
                "omega_dep" => "rain_depth",
                "omega_str" => "wind_strength",
                "omega_dir" => "wind_direction",
                "omega_qty" => "rain_quantity",
                _ => "rain_scale",
            };
            return Err(bad(key, reason));
        }
        if self.presets.is_some() && !(self.rain_density > 0.0) {
            return Err(bad("rain_density", "must be > 0 when presets are used"));
        }
        if !self.ambient_base.iter().all(|v| *v > 0.0 && *v <= 1.0) {
            return Err(bad("ambient_base", "components must lie in (0, 1]"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(bad("gamma", format!("{} must be finite and >= 0", self.gamma)));
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(bad("exposure", "must be > 0"));
        }
        if !(self.near > 0.0 && self.near < self.rain_depth) {
            return Err(bad("near", "must lie in (0, rain_depth)"));
        }
        validate_up(&self.up_vector()).map_err(|_| bad("up", "must be a unit vector"))?;
        if self.frame_times.is_empty() {
            return Err(bad("frame_times", "must not be empty"));
        }
        if !self.frame_times.iter().all(|t| *t >= 0.0 && t.is_finite()) {
            return Err(bad("frame_times", "times must be finite and >= 0"));
        }
        if !self.rain_tint.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(bad("rain_tint", "components must lie in [0, 1]"));
        }
        if !(self.volume_margin >= 0.0 && self.volume_margin.is_finite()) {
            return Err(bad("volume_margin", "must be >= 0"));
        }
        if self.scene_name.is_empty() {
            return Err(bad("scene_name", "must not be empty"));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

pub fn load_config(path: &Path) -> Result<JobConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
    let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
    JobConfig::from_toml_str(&text, &base)
}
