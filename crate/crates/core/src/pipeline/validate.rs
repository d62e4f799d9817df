//! Re-verification of a synthesized scene.
//!
//! Checks, in order: file digests and orphans, deterministic re-render of a
//! few entries, multi-view reprojection of shared drops, streak pattern
//! against camera elevation, and brightness ordering across presets with
//! luma histograms.

use super::imageio;
use super::manifest::{ManifestEntry, SceneManifest, MASK_DIR, RAINY_DIR};
use super::synthesize::{conditions, load_background, load_scene, render_item, Condition, Scene};
use super::{PipelineError, Result};
use crate::camera::{project, unproject};
use crate::photometric::{brightness_histogram, RainPreset};
use crate::rain::{sample_drops, RainParams};
use crate::streak::{max_vertical_deviation_deg, streaks_for_view, v_agreement, Streak, StreakSettings};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const HISTOGRAM_BINS: usize = 32;
pub const REPROJECTION_TOLERANCE_PX: f64 = 1e-4;
pub const PATTERN_AGREEMENT: f64 = 0.95;
pub const PATTERN_ELEVATION_DEG: f64 = 10.0;
pub const LEVEL_ELEVATION_DEG: f64 = 1e-6;
pub const VERTICAL_TOLERANCE_DEG: f64 = 0.5;
pub const MIN_STREAK_LENGTH_PX: f64 = 5.0;
pub const MIN_PATTERN_STREAKS: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct DigestIssue {
    pub entry: usize,
    pub path: String,
    pub kind: &'static str,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DigestCheck {
    pub files_checked: usize,
    pub mismatches: Vec<DigestIssue>,
    pub orphans: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RerenderCheck {
    pub entries_checked: Vec<usize>,
    pub mismatches: Vec<String>,
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReprojectionCheck {
    pub shared_drops: usize,
    pub view_pairs: usize,
    pub max_residual_px: f64,
    pub mean_residual_px: f64,
    pub violations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternCheck {
    pub view_id: String,
    pub image_name: String,
    pub elevation_deg: f64,
    pub expected: &'static str,
    pub measured: &'static str,
    pub streaks: usize,
    pub v_agreement: f64,
    pub max_vertical_deviation_deg: Option<f64>,
    pub status: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct PresetBrightness {
    pub preset: String,
    pub images: usize,
    pub pixel_count: u64,
    pub histogram: Vec<u64>,
    pub histogram_total: u64,
    pub mean_luma: f64,
    pub histogram_mean: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BrightnessCheck {
    pub presets: Vec<PresetBrightness>,
    pub counts_conserved: bool,
    pub ordered: bool,
    pub group_violations: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub manifest: PathBuf,
    pub entries: usize,
    pub digests: DigestCheck,
    pub rerender: RerenderCheck,
    pub reprojection: ReprojectionCheck,
    pub patterns: Vec<PatternCheck>,
    pub brightness: BrightnessCheck,
    pub passed: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "manifest {} ({} entries)", self.manifest.display(), self.entries);
        let d = &self.digests;
        let _ = writeln!(
            s,
            "[{}] digests: {} files, {} mismatched, {} orphaned",
            mark(d.passed),
            d.files_checked,
            d.mismatches.len(),
            d.orphans.len()
        );
        for m in &d.mismatches {
            let _ = writeln!(s, "       entry {} {}: {}", m.entry, m.path, m.kind);
        }
        for o in &d.orphans {
            let _ = writeln!(s, "       orphan {o}");
        }
        let r = &self.rerender;
        let _ = writeln!(
            s,
            "[{}] re-render: {} entries, {} mismatched{}",
            mark(r.passed),
            r.entries_checked.len(),
            r.mismatches.len(),
            r.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
        );
        let p = &self.reprojection;
        let _ = writeln!(
            s,
            "[{}] reprojection: {} shared drops, {} view pairs, max {:.3e} px, mean {:.3e} px",
            mark(p.passed),
            p.shared_drops,
            p.view_pairs,
            p.max_residual_px,
            p.mean_residual_px
        );
        for v in &self.patterns {
            let _ = writeln!(
                s,
                "[{}] pattern {}: elevation {:+.2} deg, expected {}, measured {} (V agreement {:.3} over {} streaks)",
                match v.status {
                    "fail" => "FAIL",
                    "skipped" => "SKIP",
                    _ => "PASS",
                },
                v.image_name,
                v.elevation_deg,
                v.expected,
                v.measured,
                v.v_agreement,
                v.streaks
            );
        }
        let b = &self.brightness;
        let _ = writeln!(s, "[{}] brightness ordering across presets", mark(b.passed));
        for pb in &b.presets {
            let _ = writeln!(
                s,
                "       {:<9} mean luma {:.4} (histogram mean {:.4}, {} px)",
                pb.preset, pb.mean_luma, pb.histogram_mean, pb.histogram_total
            );
        }
        for g in &b.group_violations {
            let _ = writeln!(s, "       out of order: {g}");
        }
        let _ = writeln!(s, "overall: {}", mark(self.passed));
        s
    }
}

/// Validates the scene behind `manifest_path`, re-rendering `recheck`
/// entries. Failures are collected into the report, not returned as errors.
pub fn validate(manifest_path: &Path, recheck: usize) -> Result<ValidationReport> {
    let manifest = SceneManifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));

    let digests = check_digests(&manifest, root);
    let scene = load_scene(&manifest.config);
    let conds = conditions(&manifest.config)?;

    let rerender = match &scene {
        Ok(scene) => check_rerender(&manifest, scene, &conds, recheck),
        Err(e) => RerenderCheck {
            error: Some(e.to_string()),
            ..Default::default()
        },
    };
    let (reprojection, patterns) = match &scene {
        Ok(scene) => geometry_checks(&manifest, scene, &conds),
        Err(_) => (ReprojectionCheck::default(), Vec::new()),
    };
    let brightness = check_brightness(&manifest, root)?;

    let passed = digests.passed
        && rerender.passed
        && reprojection.passed
        && patterns.iter().all(|p| p.status != "fail")
        && brightness.passed;
    Ok(ValidationReport {
        manifest: manifest_path.to_path_buf(),
        entries: manifest.entries.len(),
        digests,
        rerender,
        reprojection,
        patterns,
        brightness,
        passed,
    })
}

fn check_digests(manifest: &SceneManifest, root: &Path) -> DigestCheck {
    let mut check = DigestCheck::default();
    let mut listed = BTreeSet::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        for (rel, want) in [(&e.rainy_path, &e.rainy_digest), (&e.mask_path, &e.mask_digest)] {
            listed.insert(rel.clone());
            check.files_checked += 1;
            match std::fs::read(root.join(rel)) {
                Ok(bytes) if imageio::digest(&bytes) == *want => {}
                Ok(_) => check.mismatches.push(DigestIssue {
                    entry: i,
                    path: rel.clone(),
                    kind: "digest mismatch",
                }),
                Err(_) => check.mismatches.push(DigestIssue {
                    entry: i,
                    path: rel.clone(),
                    kind: "missing",
                }),
            }
        }
    }
    for sub in [RAINY_DIR, MASK_DIR] {
        if let Ok(rd) = std::fs::read_dir(root.join(sub)) {
            let mut names: Vec<String> = rd
                .filter_map(|e| e.ok())
                .map(|e| format!("{sub}/{}", e.file_name().to_string_lossy()))
                .filter(|rel| !listed.contains(rel))
                .collect();
            names.sort();
            check.orphans.extend(names);
        }
    }
    check.passed = check.mismatches.is_empty() && check.orphans.is_empty();
    check
}

fn condition_for<'a>(conds: &'a [Condition], entry: &ManifestEntry) -> Option<&'a Condition> {
    conds.iter().find(|c| c.label == entry.preset)
}

fn check_rerender(manifest: &SceneManifest, scene: &Scene, conds: &[Condition], recheck: usize) -> RerenderCheck {
    let mut check = RerenderCheck::default();
    let n = manifest.entries.len();
    let k = recheck.min(n);
    let picks: BTreeSet<usize> = (0..k).map(|i| i * n / k).collect();
    for idx in picks {
        check.entries_checked.push(idx);
        let e = &manifest.entries[idx];
        let outcome = (|| -> Result<bool> {
            let view = scene
                .views
                .iter()
                .find(|v| v.image_name == e.image_name)
                .ok_or_else(|| PipelineError::Usage(format!("view {} not in model", e.image_name)))?;
            let cond = condition_for(conds, e)
                .ok_or_else(|| PipelineError::Usage(format!("preset {} not configured", e.preset)))?;
            let (bg, depth) = load_background(view)?;
            let r = render_item(&manifest.config, &scene.volume, view, &bg, depth, e.frame_time, cond)?;
            Ok(imageio::digest(&r.rainy_png) == e.rainy_digest && imageio::digest(&r.mask_png) == e.mask_digest)
        })();
        match outcome {
            Ok(true) => {}
            Ok(false) => check.mismatches.push(format!("entry {idx} ({})", e.rainy_path)),
            Err(err) => check.mismatches.push(format!("entry {idx}: {err}")),
        }
    }
    check.passed = check.mismatches.is_empty();
    check
}

fn densest(conds: &[Condition]) -> &Condition {
    conds
        .iter()
        .max_by(|a, b| a.omega_den.total_cmp(&b.omega_den))
        .expect("at least one condition")
}

pub(crate) fn view_streaks(manifest: &SceneManifest, scene: &Scene, omega_den: f64, time: f64) -> Vec<Vec<Streak>> {
    let cfg = &manifest.config;
    let params = RainParams {
        omega_den,
        ..cfg.rain_params()
    };
    let drops = sample_drops(&params, &scene.volume, time);
    let settings = StreakSettings {
        exposure: cfg.exposure,
        near: cfg.near,
        far: cfg.rain_depth,
    };
    scene
        .views
        .iter()
        .map(|v| streaks_for_view(&drops, &v.camera, &settings))
        .collect()
}

fn geometry_checks(
    manifest: &SceneManifest,
    scene: &Scene,
    conds: &[Condition],
) -> (ReprojectionCheck, Vec<PatternCheck>) {
    let cfg = &manifest.config;
    let cond = densest(conds);
    let mut repro = ReprojectionCheck::default();
    let mut sum = 0.0;
    let mut patterns = Vec::new();

    for (frame_idx, &time) in cfg.frame_times.iter().enumerate() {
        let per_view = view_streaks(manifest, scene, cond.omega_den, time);
        let mut by_drop: BTreeMap<u64, Vec<(usize, &Streak)>> = BTreeMap::new();
        for (vi, streaks) in per_view.iter().enumerate() {
            for s in streaks {
                by_drop.entry(s.drop_id).or_default().push((vi, s));
            }
        }
        for seen in by_drop.values().filter(|v| v.len() >= 2) {
            repro.shared_drops += 1;
            for &(a, sa) in seen {
                let world = unproject(&sa.mid, sa.depth, &scene.views[a].camera);
                for &(b, sb) in seen {
                    if a == b {
                        continue;
                    }
                    repro.view_pairs += 1;
                    let residual = match project(&world, &scene.views[b].camera) {
                        Ok((px, _)) => (px - sb.mid).norm(),
                        Err(_) => f64::INFINITY,
                    };
                    sum += residual;
                    repro.max_residual_px = repro.max_residual_px.max(residual);
                    if !(residual < REPROJECTION_TOLERANCE_PX) {
                        repro.violations += 1;
                    }
                }
            }
        }
        if frame_idx == 0 {
            for (view, streaks) in scene.views.iter().zip(&per_view) {
                patterns.push(classify(view, streaks, cfg.wind_strength));
            }
        }
    }
    repro.mean_residual_px = if repro.view_pairs > 0 {
        sum / repro.view_pairs as f64
    } else {
        0.0
    };
    repro.passed = repro.violations == 0;
    (repro, patterns)
}

fn classify(view: &super::synthesize::SceneView, streaks: &[Streak], wind: f64) -> PatternCheck {
    let elevation_deg = view.camera.angles.elevation.to_degrees();
    let expected = if elevation_deg > PATTERN_ELEVATION_DEG {
        "lambda"
    } else if elevation_deg < -PATTERN_ELEVATION_DEG {
        "v"
    } else {
        "parallel"
    };
    let long = streaks.iter().filter(|s| s.length() > MIN_STREAK_LENGTH_PX).count();
    let (agree, counted) = v_agreement(streaks, view.camera.intrinsics.cx, MIN_STREAK_LENGTH_PX);
    let frac = if counted > 0 { agree as f64 / counted as f64 } else { 0.0 };
    let deviation = max_vertical_deviation_deg(streaks, MIN_STREAK_LENGTH_PX);
    let measured = if long < MIN_PATTERN_STREAKS {
        "insufficient"
    } else if deviation.is_some_and(|d| d <= VERTICAL_TOLERANCE_DEG) {
        "parallel"
    } else if counted > 0 && frac >= PATTERN_AGREEMENT {
        "v"
    } else if counted > 0 && frac <= 1.0 - PATTERN_AGREEMENT {
        "lambda"
    } else {
        "mixed"
    };
    let skip = wind != 0.0
        || measured == "insufficient"
        || (expected == "parallel" && elevation_deg.abs() > LEVEL_ELEVATION_DEG);
    let status = if skip {
        "skipped"
    } else if expected == measured {
        "pass"
    } else {
        "fail"
    };
    PatternCheck {
        view_id: view.camera.view_id.clone(),
        image_name: view.image_name.clone(),
        elevation_deg,
        expected,
        measured,
        streaks: long,
        v_agreement: frac,
        max_vertical_deviation_deg: deviation,
        status,
    }
}

fn check_brightness(manifest: &SceneManifest, root: &Path) -> Result<BrightnessCheck> {
    let mut check = BrightnessCheck {
        counts_conserved: true,
        ..Default::default()
    };
    struct Acc {
        hist: Vec<u64>,
        luma_sum: f64,
        pixels: u64,
        images: usize,
    }
    let mut per_preset: BTreeMap<String, Acc> = BTreeMap::new();
    let mut groups: BTreeMap<(String, usize), Vec<(String, f64)>> = BTreeMap::new();
    for e in &manifest.entries {
        let path = root.join(&e.rainy_path);
        let Ok((img, _)) = imageio::read_png(&path) else {
            // Missing or corrupt files are reported by the digest check.
            continue;
        };
        let h = brightness_histogram(&img, HISTOGRAM_BINS);
        let total: u64 = h.iter().sum();
        if total != img.pixel_count() as u64 {
            check.counts_conserved = false;
        }
        let mean = img.mean_luma();
        let acc = per_preset.entry(e.preset.clone()).or_insert_with(|| Acc {
            hist: vec![0; HISTOGRAM_BINS],
            luma_sum: 0.0,
            pixels: 0,
            images: 0,
        });
        for (a, b) in acc.hist.iter_mut().zip(&h) {
            *a += b;
        }
        acc.luma_sum += mean * img.pixel_count() as f64;
        acc.pixels += img.pixel_count() as u64;
        acc.images += 1;
        groups
            .entry((e.image_name.clone(), e.frame_index))
            .or_default()
            .push((e.preset.clone(), mean));
    }

    let rank = |name: &str| RainPreset::parse(name).map(|p| p as usize).unwrap_or(usize::MAX);
    let mut names: Vec<String> = per_preset.keys().cloned().collect();
    names.sort_by_key(|n| (rank(n), n.clone()));
    for n in &names {
        let acc = &per_preset[n];
        let histogram_total: u64 = acc.hist.iter().sum();
        if histogram_total != acc.pixels {
            check.counts_conserved = false;
        }
        let histogram_mean = if histogram_total > 0 {
            acc.hist
                .iter()
                .enumerate()
                .map(|(i, &c)| c as f64 * (i as f64 + 0.5) / HISTOGRAM_BINS as f64)
                .sum::<f64>()
                / histogram_total as f64
        } else {
            0.0
        };
        check.presets.push(PresetBrightness {
            preset: n.clone(),
            images: acc.images,
            pixel_count: acc.pixels,
            histogram: acc.hist.clone(),
            histogram_total,
            mean_luma: if acc.pixels > 0 { acc.luma_sum / acc.pixels as f64 } else { 0.0 },
            histogram_mean,
        });
    }
    let ranked: Vec<&PresetBrightness> = check.presets.iter().filter(|p| rank(&p.preset) != usize::MAX).collect();
    check.ordered = ranked.windows(2).all(|w| w[0].mean_luma > w[1].mean_luma);
    for ((image, frame), mut means) in groups {
        means.retain(|(p, _)| rank(p) != usize::MAX);
        means.sort_by_key(|(p, _)| rank(p));
        if !means.windows(2).all(|w| w[0].1 > w[1].1) {
            check.group_violations.push(format!("{image} frame {frame}"));
        }
    }
    check.passed = check.counts_conserved && check.ordered && check.group_violations.is_empty();
    Ok(check)
}
