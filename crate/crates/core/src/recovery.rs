//! Recursive brightness enhancement.
//!
//! The quadratic curve `BE(I, A) = I + A * I * (1 - I)` is applied `n` times
//! with per-step, per-channel parameters `A_a`. For `A` in `[-1, 1]` and `I`
//! in `[0, 1]` the curve maps `[0, 1]` onto itself and is monotone, so no
//! clamping is needed anywhere in the recursion.
//!
//! The curve parameters are fitted per image by projected gradient descent
//! on one of two objectives, with gradients from the chain rule through the
//! recursion:
//!
//! ```text
//! dBE_a / dBE_{a-1} = 1 + A_a (1 - 2 BE_{a-1})
//! dBE_a / dA_a      = BE_{a-1} (1 - BE_{a-1})
//! ```

use crate::photometric::{AmbientLight, ImageBuffer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_STEPS: usize = 4;
pub const DEFAULT_LR: f64 = 0.05;
pub const DEFAULT_ITERS: usize = 200;
pub const DEFAULT_PATCH: u32 = 16;
pub const DEFAULT_EXPOSURE_TARGET: f64 = 0.6;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("curve parameter {value} at step {step} channel {channel} is outside [-1, 1]")]
    ParamOutOfRange { step: usize, channel: usize, value: f64 },
    #[error("reference is {reference:?} but image is {image:?}")]
    ShapeMismatch { image: (u32, u32), reference: (u32, u32) },
    #[error("loss became non-finite at iteration {iteration} (lr {lr})")]
    NonFiniteLoss { iteration: usize, lr: f64 },
    #[error("invalid fit settings: {0}")]
    InvalidSettings(String),
}

/// `n` per-channel curve parameters, one triple per recursion step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CurveParams {
    pub steps: Vec<[f64; 3]>,
}

impl CurveParams {
    pub fn zeros(n: usize) -> Self {
        Self {
            steps: vec![[0.0; 3]; n],
        }
    }

    pub fn new(steps: Vec<[f64; 3]>) -> Result<Self, RecoveryError> {
        let p = Self { steps };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<(), RecoveryError> {
        if self.steps.is_empty() {
            return Err(RecoveryError::InvalidSettings("at least one step is required".into()));
        }
        for (step, a) in self.steps.iter().enumerate() {
            check_step(step, a)?;
        }
        Ok(())
    }

    fn project(&mut self) {
        for a in &mut self.steps {
            for v in a.iter_mut() {
                *v = v.clamp(-1.0, 1.0);
            }
        }
    }
}

fn check_step(step: usize, a: &[f64; 3]) -> Result<(), RecoveryError> {
    for (channel, &value) in a.iter().enumerate() {
        if !(-1.0..=1.0).contains(&value) {
            return Err(RecoveryError::ParamOutOfRange {
                step,
                channel,
                value,
            });
        }
    }
    Ok(())
}

#[inline]
fn curve(i: f64, a: f64) -> f64 {
    i + a * i * (1.0 - i)
}

pub fn be_curve(image: &ImageBuffer, a: [f64; 3]) -> Result<ImageBuffer, RecoveryError> {
    check_step(0, &a)?;
    Ok(apply_step(image, &a))
}

fn apply_step(image: &ImageBuffer, a: &[f64; 3]) -> ImageBuffer {
    let mut data = image.data.clone();
    for px in data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = curve(px[c], a[c]);
        }
    }
    ImageBuffer::new(image.width, image.height, data)
}

/// All recursion stages, `BE_0 = input` through `BE_n = E`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementTrace {
    pub stages: Vec<ImageBuffer>,
}

impl EnhancementTrace {
    pub fn output(&self) -> &ImageBuffer {
        self.stages.last().expect("trace has at least one stage")
    }
}

pub fn enhance(image: &ImageBuffer, params: &CurveParams) -> Result<EnhancementTrace, RecoveryError> {
    params.validate()?;
    let mut stages = Vec::with_capacity(params.len() + 1);
    stages.push(image.clone());
    for a in &params.steps {
        let next = apply_step(stages.last().unwrap(), a);
        stages.push(next);
    }
    Ok(EnhancementTrace { stages })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Mean squared error over all pixels and channels.
    MseToReference(ImageBuffer),
    /// Mean over non-overlapping `patch x patch` tiles of the squared gap
    /// between tile mean luma and `target`. Edge tiles may be smaller.
    ExposureTarget { target: f64, patch: u32 },
}

impl Objective {
    fn check(&self, image: &ImageBuffer) -> Result<(), RecoveryError> {
        match self {
            Objective::MseToReference(r) if !r.same_shape(image) => Err(RecoveryError::ShapeMismatch {
                image: (image.width, image.height),
                reference: (r.width, r.height),
            }),
            Objective::ExposureTarget { patch: 0, .. } => {
                Err(RecoveryError::InvalidSettings("patch size must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Pixels per parallel work unit. Partial sums are combined in chunk order,
/// so losses and gradients do not depend on the thread count.
const CHUNK_PIXELS: usize = 4096;

/// Tile index of every pixel plus the pixel count of every tile.
struct Tiling {
    tile_of: Vec<u32>,
    sizes: Vec<f64>,
}

fn tiling(width: u32, height: u32, patch: u32) -> Tiling {
    let tiles_x = width.div_ceil(patch);
    let tiles_y = height.div_ceil(patch);
    let mut sizes = vec![0.0; (tiles_x * tiles_y) as usize];
    let mut tile_of = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            let t = (y / patch) * tiles_x + x / patch;
            tile_of.push(t);
            sizes[t as usize] += 1.0;
        }
    }
    Tiling { tile_of, sizes }
}

fn prepare(image: &ImageBuffer, objective: &Objective) -> Result<Option<Tiling>, RecoveryError> {
    objective.check(image)?;
    Ok(match objective {
        Objective::ExposureTarget { patch, .. } => Some(tiling(image.width, image.height, *patch)),
        _ => None,
    })
}

#[inline]
fn forward_value(i: f64, steps: &[[f64; 3]], c: usize) -> f64 {
    steps.iter().fold(i, |x, a| curve(x, a[c]))
}

fn forward_all(image: &ImageBuffer, params: &CurveParams) -> Vec<f64> {
    image
        .data
        .par_chunks(CHUNK_PIXELS * 3)
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .enumerate()
                .map(|(k, &v)| forward_value(v, &params.steps, k % 3))
        })
        .collect()
}

/// Exposure loss of curve outputs `out` and its derivative with respect to
/// each tile's pixel values (shared by all values of a tile).
fn exposure_terms(out: &[f64], target: f64, tiles: &Tiling) -> (f64, Vec<f64>) {
    let mut sums = vec![0.0; tiles.sizes.len()];
    for (px, &t) in out.chunks_exact(3).zip(&tiles.tile_of) {
        sums[t as usize] += px[0] + px[1] + px[2];
    }
    let count = tiles.sizes.len() as f64;
    let mut loss = 0.0;
    let mut coef = vec![0.0; sums.len()];
    for ((s, m), k) in sums.iter().zip(&tiles.sizes).zip(coef.iter_mut()) {
        let gap = s / (3.0 * m) - target;
        loss += gap * gap;
        *k = 2.0 * gap / (count * 3.0 * m);
    }
    (loss / count, coef)
}

fn forward_loss(image: &ImageBuffer, params: &CurveParams, objective: &Objective, tiles: Option<&Tiling>) -> f64 {
    match objective {
        Objective::MseToReference(r) => {
            let partial: Vec<f64> = image
                .data
                .par_chunks(CHUNK_PIXELS * 3)
                .zip(r.data.par_chunks(CHUNK_PIXELS * 3))
                .map(|(chunk, reference)| {
                    let mut acc = 0.0;
                    for (k, (&v, &t)) in chunk.iter().zip(reference).enumerate() {
                        let d = forward_value(v, &params.steps, k % 3) - t;
                        acc += d * d;
                    }
                    acc
                })
                .collect();
            partial.iter().sum::<f64>() / image.data.len() as f64
        }
        Objective::ExposureTarget { target, .. } => {
            let out = forward_all(image, params);
            exposure_terms(&out, *target, tiles.expect("tiling for exposure objective")).0
        }
    }
}

/// Loss and gradient in one pass per value: the recursion is replayed
/// forward, then the upstream derivative is pushed back through every step.
fn gradient(
    image: &ImageBuffer,
    params: &CurveParams,
    objective: &Objective,
    tiles: Option<&Tiling>,
) -> (f64, Vec<[f64; 3]>) {
    let n = params.len();
    let total = image.data.len() as f64;
    let exposure = match objective {
        Objective::ExposureTarget { target, .. } => {
            let tiles = tiles.expect("tiling for exposure objective");
            let out = forward_all(image, params);
            Some((exposure_terms(&out, *target, tiles), tiles))
        }
        Objective::MseToReference(_) => None,
    };

    let partial: Vec<(f64, Vec<[f64; 3]>)> = image
        .data
        .par_chunks(CHUNK_PIXELS * 3)
        .enumerate()
        .map(|(ci, chunk)| {
            let base = ci * CHUNK_PIXELS * 3;
            let mut stages = vec![0.0; n + 1];
            let mut grad = vec![[0.0; 3]; n];
            let mut loss = 0.0;
            for (k, &v) in chunk.iter().enumerate() {
                let c = k % 3;
                stages[0] = v;
                for (s, a) in params.steps.iter().enumerate() {
                    stages[s + 1] = curve(stages[s], a[c]);
                }
                let mut g = match (objective, &exposure) {
                    (Objective::MseToReference(r), _) => {
                        let d = stages[n] - r.data[base + k];
                        loss += d * d;
                        2.0 * d / total
                    }
                    (_, Some(((_, coef), tiles))) => coef[tiles.tile_of[(base + k) / 3] as usize],
                    _ => unreachable!(),
                };
                for s in (0..n).rev() {
                    let i = stages[s];
                    grad[s][c] += g * i * (1.0 - i);
                    g *= 1.0 + params.steps[s][c] * (1.0 - 2.0 * i);
                }
            }
            (loss, grad)
        })
        .collect();

    let mut grad = vec![[0.0; 3]; n];
    let mut loss = 0.0;
    for (l, g) in &partial {
        loss += l;
        for (acc, part) in grad.iter_mut().zip(g) {
            for c in 0..3 {
                acc[c] += part[c];
            }
        }
    }
    let loss = match &exposure {
        Some(((l, _), _)) => *l,
        None => loss / total,
    };
    (loss, grad)
}

/// Objective value and its analytic gradient with respect to every `A_a`.
pub fn loss_and_gradient(
    image: &ImageBuffer,
    params: &CurveParams,
    objective: &Objective,
) -> Result<(f64, CurveParams), RecoveryError> {
    params.validate()?;
    let tiles = prepare(image, objective)?;
    let (loss, steps) = gradient(image, params, objective, tiles.as_ref());
    Ok((loss, CurveParams { steps }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub steps: usize,
    pub lr: f64,
    pub iters: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            lr: DEFAULT_LR,
            iters: DEFAULT_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: CurveParams,
    /// Loss at initialization followed by the loss after every iteration.
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.history.last().expect("history is never empty")
    }
}

/// Projected gradient descent from `A = 0`. Each iteration tries the step
/// `lr`, halving it up to 20 times until the loss does not increase; if no
/// trial is accepted the parameters stay put. The loss history is therefore
/// non-increasing and the returned parameters are the best seen.
pub fn fit_params(
    image: &ImageBuffer,
    objective: &Objective,
    settings: &FitSettings,
) -> Result<FitResult, RecoveryError> {
    if settings.steps == 0 {
        return Err(RecoveryError::InvalidSettings("steps must be >= 1".into()));
    }
    if !(settings.lr >= 0.0 && settings.lr.is_finite()) {
        return Err(RecoveryError::InvalidSettings(format!("lr {} must be >= 0", settings.lr)));
    }
    if settings.iters == 0 {
        return Err(RecoveryError::InvalidSettings("iters must be >= 1".into()));
    }
    let tiles = prepare(image, objective)?;
    let tiles = tiles.as_ref();

    let mut params = CurveParams::zeros(settings.steps);
    let mut loss = forward_loss(image, &params, objective, tiles);
    if !loss.is_finite() {
        return Err(RecoveryError::NonFiniteLoss {
            iteration: 0,
            lr: settings.lr,
        });
    }
    let mut history = Vec::with_capacity(settings.iters + 1);
    history.push(loss);

    for iteration in 1..=settings.iters {
        let (_, grad) = gradient(image, &params, objective, tiles);
        let mut lr = settings.lr;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = params.clone();
            for (a, g) in trial.steps.iter_mut().zip(&grad) {
                for c in 0..3 {
                    a[c] -= lr * g[c];
                }
            }
            trial.project();
            let trial_loss = forward_loss(image, &trial, objective, tiles);
            if !trial_loss.is_finite() {
                return Err(RecoveryError::NonFiniteLoss { iteration, lr });
            }
            if trial_loss <= loss {
                params = trial;
                loss = trial_loss;
                break;
            }
            lr *= 0.5;
        }
        history.push(loss);
    }
    log::debug!(
        "fit: {} steps, loss {:.6e} -> {:.6e}",
        settings.steps,
        history[0],
        loss
    );
    Ok(FitResult { params, history })
}

/// Per-channel `image / light`, clamped to `[0, 1]`.
pub fn unattenuated_reference(image: &ImageBuffer, light: &AmbientLight) -> ImageBuffer {
    let mut data = image.data.clone();
    for px in data.chunks_exact_mut(3) {
        for (v, l) in px.iter_mut().zip(light.0) {
            *v = (*v / l).clamp(0.0, 1.0);
        }
    }
    ImageBuffer::new(image.width, image.height, data)
}

/// Fits the curve towards `image / light` and returns the enhancement trace.
pub fn undo_attenuation(
    image: &ImageBuffer,
    light: &AmbientLight,
    settings: &FitSettings,
) -> Result<(EnhancementTrace, FitResult), RecoveryError> {
    if !light.0.iter().all(|&l| l > 0.0) {
        return Err(RecoveryError::InvalidSettings("light must be positive".into()));
    }
    let objective = Objective::MseToReference(unattenuated_reference(image, light));
    let fit = fit_params(image, &objective, settings)?;
    Ok((enhance(image, &fit.params)?, fit))
}
