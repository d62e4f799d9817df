//! Rainy scene synthesis over every view, frame time and rain preset.

use super::config::JobConfig;
use super::imageio::{self, BitDepth};
use super::manifest::{
    output_file_name, ManifestEntry, SceneManifest, VolumeRecord, MANIFEST_FILE, MASK_DIR, RAINY_DIR,
};
use super::{with_threads, PipelineError, Result};
use crate::camera::Camera;
use crate::colmap::{build_viewpoint_matrix, read_model};
use crate::photometric::{ambient_from_density, compose, AmbientLight, ImageBuffer, RainPreset};
use crate::rain::{drop_count, volume_from_cameras, RainParams, RainVolume};
use crate::streak::render_view;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct SceneView {
    pub camera: Camera,
    pub image_name: String,
    pub background_path: PathBuf,
}

/// Cameras and rain volume derived from a config.
#[derive(Debug, Clone)]
pub struct Scene {
    pub views: Vec<SceneView>,
    pub volume: RainVolume,
}

pub fn load_scene(config: &JobConfig) -> Result<Scene> {
    let (cameras, images) = read_model(&config.colmap_dir)?;
    let up = config.up_vector();
    let matrix = build_viewpoint_matrix(&cameras, &images, &up, 1, 1)?;
    let views: Vec<SceneView> = matrix
        .entries
        .into_iter()
        .map(|e| SceneView {
            background_path: config.background_dir.join(&e.name),
            image_name: e.name,
            camera: e.camera,
        })
        .collect();
    let cams: Vec<Camera> = views.iter().map(|v| v.camera.clone()).collect();
    let volume = volume_from_cameras(&cams, config.rain_depth, config.volume_margin, config.seed, up)?;
    Ok(Scene { views, volume })
}

/// One rain condition of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub label: &'static str,
    pub preset: Option<RainPreset>,
    pub omega_den: f64,
    pub light: AmbientLight,
}

pub fn conditions(config: &JobConfig) -> Result<Vec<Condition>> {
    let mut out = Vec::new();
    match &config.presets {
        None => out.push(Condition {
            label: "custom",
            preset: None,
            omega_den: config.rain_density,
            light: ambient_from_density(config.ambient_base, config.gamma, config.rain_density)?,
        }),
        Some(presets) => {
            for &p in presets {
                let (omega_den, light) =
                    crate::photometric::preset_params(p, config.ambient_base, config.gamma, config.rain_density)?;
                out.push(Condition {
                    label: p.name(),
                    preset: Some(p),
                    omega_den,
                    light,
                });
            }
        }
    }
    Ok(out)
}

pub(crate) fn load_background(view: &SceneView) -> Result<(ImageBuffer, BitDepth)> {
    let (img, depth) = imageio::read_png(&view.background_path).map_err(PipelineError::image(&view.background_path))?;
    let k = &view.camera.intrinsics;
    if (img.width, img.height) != (k.width, k.height) {
        return Err(PipelineError::BackgroundSize {
            name: view.image_name.clone(),
            expected: (k.width, k.height),
            got: (img.width, img.height),
        });
    }
    Ok((img, depth))
}

/// Encoded outputs of one (view, frame, condition) item.
pub(crate) struct Rendered {
    pub rainy_png: Vec<u8>,
    pub mask_png: Vec<u8>,
}

pub(crate) fn render_item(
    config: &JobConfig,
    volume: &RainVolume,
    view: &SceneView,
    background: &ImageBuffer,
    depth: BitDepth,
    time: f64,
    condition: &Condition,
) -> Result<Rendered> {
    let params = RainParams {
        omega_den: condition.omega_den,
        ..config.rain_params()
    };
    let mask = render_view(&params, volume, &view.camera, time, config.exposure, config.near);
    let rainy = compose(background, &mask, &condition.light, config.rain_tint)?;
    Ok(Rendered {
        rainy_png: imageio::encode_png(&rainy, depth),
        mask_png: imageio::encode_mask_png(&mask),
    })
}

fn staging_dir(output: &Path) -> PathBuf {
    let name = output
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    output.with_file_name(format!(".{name}.partial"))
}

fn prepare_output(output: &Path) -> Result<()> {
    if !output.exists() {
        return Ok(());
    }
    let mut entries = std::fs::read_dir(output).map_err(PipelineError::io(output))?;
    let empty = entries.next().is_none();
    if !empty && !output.join(MANIFEST_FILE).is_file() {
        return Err(PipelineError::OutputNotEmpty(output.to_path_buf()));
    }
    std::fs::remove_dir_all(output).map_err(PipelineError::io(output))
}

/// Renders every view x frame time x condition, writes rainy images and
/// masks, and writes the manifest last. Outputs are staged in a sibling
/// directory and moved into `output_dir` only after the manifest exists.
pub fn synthesize(config: &JobConfig, threads: Option<usize>) -> Result<SceneManifest> {
    config.validate()?;
    let scene = load_scene(config)?;
    let conditions = conditions(config)?;
    let output = &config.output_dir;
    let staging = staging_dir(output);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(PipelineError::io(&staging))?;
    }
    for sub in [RAINY_DIR, MASK_DIR] {
        let d = staging.join(sub);
        std::fs::create_dir_all(&d).map_err(PipelineError::io(&d))?;
    }

    let result = with_threads(threads, || run_items(config, &scene, &conditions, &staging))?;
    let entries = match result {
        Ok(entries) => entries,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    };

    let max_den = conditions.iter().map(|c| c.omega_den).fold(0.0, f64::max);
    let manifest = SceneManifest {
        scene_name: config.scene_name.clone(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        volume: VolumeRecord {
            min: scene.volume.min.into(),
            max: scene.volume.max.into(),
            seed: scene.volume.seed,
            drop_capacity: drop_count(&config.rain_params().with_density(max_den), &scene.volume),
        },
        entries,
    };
    let mpath = staging.join(MANIFEST_FILE);
    std::fs::write(&mpath, manifest.to_json()).map_err(PipelineError::io(&mpath))?;

    prepare_output(output)?;
    if let Some(parent) = output.parent() {
        std::fs::create_dir_all(parent).map_err(PipelineError::io(parent))?;
    }
    std::fs::rename(&staging, output).map_err(PipelineError::io(output))?;
    log::info!("wrote {} entries to {}", manifest.entries.len(), output.display());
    Ok(manifest)
}

fn run_items(
    config: &JobConfig,
    scene: &Scene,
    conditions: &[Condition],
    staging: &Path,
) -> Result<Vec<ManifestEntry>> {
    let backgrounds: Vec<(ImageBuffer, BitDepth)> =
        scene.views.par_iter().map(load_background).collect::<Result<_>>()?;

    let mut items = Vec::new();
    for view_idx in 0..scene.views.len() {
        for frame_idx in 0..config.frame_times.len() {
            for cond in conditions {
                items.push((view_idx, frame_idx, cond));
            }
        }
    }

    items
        .par_iter()
        .map(|&(view_idx, frame_idx, cond)| {
            let view = &scene.views[view_idx];
            let time = config.frame_times[frame_idx];
            let annotate = |source| PipelineError::Item {
                view: view.image_name.clone(),
                frame: frame_idx,
                preset: cond.label.to_string(),
                source: Box::new(source),
            };
            let (bg, depth) = &backgrounds[view_idx];
            let rendered =
                render_item(config, &scene.volume, view, bg, *depth, time, cond).map_err(annotate)?;
            let file = output_file_name(&view.image_name, cond.label, frame_idx);
            let rainy_rel = format!("{RAINY_DIR}/{file}");
            let mask_rel = format!("{MASK_DIR}/{file}");
            for (rel, bytes) in [(&rainy_rel, &rendered.rainy_png), (&mask_rel, &rendered.mask_png)] {
                let p = staging.join(rel);
                std::fs::write(&p, bytes).map_err(PipelineError::io(&p)).map_err(annotate)?;
            }
            Ok(ManifestEntry {
                image_name: view.image_name.clone(),
                view_id: view.camera.view_id.clone(),
                elevation: view.camera.angles.elevation,
                azimuth: view.camera.angles.azimuth,
                frame_index: frame_idx,
                frame_time: time,
                preset: cond.label.to_string(),
                omega_den: cond.omega_den,
                ambient: cond.light.0,
                rainy_path: rainy_rel,
                rainy_digest: imageio::digest(&rendered.rainy_png),
                mask_path: mask_rel,
                mask_digest: imageio::digest(&rendered.mask_png),
            })
        })
        .collect()
}
