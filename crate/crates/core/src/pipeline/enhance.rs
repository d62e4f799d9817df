//! Batch brightness recovery over a directory of PNGs.

use super::imageio;
use super::{PipelineError, Result};
use crate::recovery::{enhance, fit_params, CurveParams, FitSettings, Objective, DEFAULT_PATCH};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const PARAMS_FILE: &str = "params.json";

#[derive(Debug, Clone, PartialEq)]
pub enum EnhanceMode {
    /// Fit each image to the same-named file in this directory.
    Reference(PathBuf),
    /// Fit each image to a target mean exposure.
    Exposure(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOptions {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub mode: EnhanceMode,
    pub settings: FitSettings,
    pub patch: u32,
}

impl EnhanceOptions {
    pub fn new(input_dir: PathBuf, output_dir: PathBuf, mode: EnhanceMode) -> Self {
        Self {
            input_dir,
            output_dir,
            mode,
            settings: FitSettings::default(),
            patch: DEFAULT_PATCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedImage {
    pub name: String,
    /// One `[r, g, b]` triple per recursion step.
    pub params: CurveParams,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Contents of `params.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceRecord {
    pub objective: String,
    pub steps: usize,
    pub lr: f64,
    pub iters: usize,
    pub images: Vec<EnhancedImage>,
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(PipelineError::io(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

pub fn enhance_images(opts: &EnhanceOptions) -> Result<EnhanceRecord> {
    if opts.settings.steps == 0 {
        return Err(PipelineError::Usage("--steps must be >= 1".into()));
    }
    if let EnhanceMode::Exposure(e0) = opts.mode {
        if !(0.0..=1.0).contains(&e0) {
            return Err(PipelineError::Usage("target exposure must lie in [0, 1]".into()));
        }
    }
    let names = png_names(&opts.input_dir)?;
    std::fs::create_dir_all(&opts.output_dir).map_err(PipelineError::io(&opts.output_dir))?;

    let mut images = Vec::with_capacity(names.len());
    for name in names {
        let path = opts.input_dir.join(&name);
        let (img, depth) = imageio::read_png(&path).map_err(PipelineError::image(&path))?;
        let objective = match &opts.mode {
            EnhanceMode::Reference(dir) => {
                let rpath = dir.join(&name);
                let (reference, _) = imageio::read_png(&rpath).map_err(PipelineError::image(&rpath))?;
                Objective::MseToReference(reference)
            }
            EnhanceMode::Exposure(target) => Objective::ExposureTarget {
                target: *target,
                patch: opts.patch,
            },
        };
        let fit = fit_params(&img, &objective, &opts.settings)?;
        let trace = enhance(&img, &fit.params)?;
        let out = opts.output_dir.join(&name);
        std::fs::write(&out, imageio::encode_png(trace.output(), depth)).map_err(PipelineError::io(&out))?;
        log::info!("{name}: loss {:.4e} -> {:.4e}", fit.history[0], fit.final_loss());
        images.push(EnhancedImage {
            name,
            initial_loss: fit.history[0],
            final_loss: fit.final_loss(),
            params: fit.params,
        });
    }

    let record = EnhanceRecord {
        objective: match &opts.mode {
            EnhanceMode::Reference(_) => "mse_to_reference".into(),
            EnhanceMode::Exposure(e) => format!("exposure_target({e})"),
        },
        steps: opts.settings.steps,
        lr: opts.settings.lr,
        iters: opts.settings.iters,
        images,
    };
    let ppath = opts.output_dir.join(PARAMS_FILE);
    let mut json = serde_json::to_vec_pretty(&record).expect("record serializes");
    json.push(b'\n');
    std::fs::write(&ppath, json).map_err(PipelineError::io(&ppath))?;
    Ok(record)
}
