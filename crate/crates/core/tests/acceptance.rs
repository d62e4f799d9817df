//! End-to-end acceptance checks on the bundled fixtures. Prints one line per
//! criterion and exits nonzero if any fails.

mod common;

use common::*;
use rainview::colmap::*;
use rainview::photometric::ambient_from_density;
use rainview::pipeline::imageio::read_png;
use rainview::pipeline::{load_config, load_scene, synthesize, validate, SceneManifest};
use rainview::rain::sample_drops;
use rainview::recovery::{be_curve, enhance, fit_params, loss_and_gradient};
use rainview::streak::streaks_for_view;
use rainview::{CurveParams, FitSettings, ImageBuffer, Objective, RainParams, StreakSettings};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

type Outcome = (bool, String);
type Px = (f64, f64);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Rig {
    _tmp: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn rig() -> Rig {
    let tmp = tempfile::tempdir().unwrap();
    let config = rig3_config(tmp.path(), "scene", "");
    let out = tmp.path().join("scene");
    Rig { _tmp: tmp, config, out }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for sub in ["", "rainy", "masks"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                files.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn c1_determinism(rig: &Rig) -> Outcome {
    let cfg = load_config(&rig.config).unwrap();
    let mut runs = Vec::new();
    let mut slowest = 0.0f64;
    for threads in [1, 8, 1] {
        let t = Instant::now();
        synthesize(&cfg, Some(threads)).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        runs.push(snapshot(&rig.out));
    }
    let files = runs[0].len();
    let same = runs.iter().all(|r| r == &runs[0]);
    (
        same && slowest < 30.0 && files > 1,
        format!("{files} files identical across 1/8/1 threads: {same}; slowest run {slowest:.2} s (< 30 s)"),
    )
}

/// Camera-to-world inverse of the oracle projection.
fn unproject_oracle(k: [f64; 4], q: [f64; 4], t: [f64; 3], u: f64, v: f64, depth: f64) -> [f64; 3] {
    let r = quat_oracle(q);
    let pc = [(u - k[2]) / k[0] * depth - t[0], (v - k[3]) / k[1] * depth - t[1], depth - t[2]];
    // R^T pc
    [
        r[0][0] * pc[0] + r[1][0] * pc[1] + r[2][0] * pc[2],
        r[0][1] * pc[0] + r[1][1] * pc[1] + r[2][1] * pc[2],
        r[0][2] * pc[0] + r[1][2] * pc[1] + r[2][2] * pc[2],
    ]
}

fn rig_streaks(cfg: &rainview::pipeline::JobConfig, den: f64, time: f64) -> (rainview::pipeline::Scene, Vec<Vec<rainview::Streak>>) {
    let scene = load_scene(cfg).unwrap();
    let drops = sample_drops(&RainParams { omega_den: den, ..cfg.rain_params() }, &scene.volume, time);
    let settings = StreakSettings { exposure: cfg.exposure, near: cfg.near, far: cfg.rain_depth };
    let per_view = scene.views.iter().map(|v| streaks_for_view(&drops, &v.camera, &settings)).collect();
    (scene, per_view)
}

fn c2_reprojection(rig: &Rig) -> Outcome {
    let cfg = load_config(&rig.config).unwrap();
    let images = parse_images_text(&std::fs::read(rig3_dir().join("sparse/images.txt")).unwrap()).unwrap();
    let cams = parse_cameras_text(&std::fs::read(rig3_dir().join("sparse/cameras.txt")).unwrap()).unwrap();
    let p = &cams[0].params;
    let k = [p[0], p[1], p[2], p[3]];
    let (mut shared, mut pairs, mut violations, mut worst) = (0usize, 0usize, 0usize, 0.0f64);
    for &time in &cfg.frame_times {
        let (scene, per_view) = rig_streaks(&cfg, cfg.rain_density * 6.0, time);
        let pose_of = |i: usize| {
            let name = &scene.views[i].image_name;
            let im = images.iter().find(|r| &r.name == name).unwrap();
            (im.qvec, im.tvec)
        };
        let mut by_drop: BTreeMap<u64, Vec<(usize, rainview::Streak)>> = BTreeMap::new();
        for (vi, streaks) in per_view.iter().enumerate() {
            for s in streaks {
                by_drop.entry(s.drop_id).or_default().push((vi, *s));
            }
        }
        for seen in by_drop.values().filter(|s| s.len() >= 2) {
            shared += 1;
            for (a, sa) in seen {
                let (qa, ta) = pose_of(*a);
                let world = unproject_oracle(k, qa, ta, sa.mid.x, sa.mid.y, sa.depth);
                for (b, sb) in seen.iter().filter(|(b, _)| b != a) {
                    let (qb, tb) = pose_of(*b);
                    let (u, v, _) = project_oracle(k, qb, tb, world);
                    let r = ((u - sb.mid.x).powi(2) + (v - sb.mid.y).powi(2)).sqrt();
                    pairs += 1;
                    worst = worst.max(r);
                    violations += (r.is_nan() || r >= 1e-4) as usize;
                }
            }
        }
    }
    (
        shared > 0 && violations == 0,
        format!("{shared} drops seen in >= 2 views, {pairs} view pairs, max residual {worst:.2e} px (< 1e-4), {violations} violations"),
    )
}

fn c3_patterns(rig: &Rig) -> Outcome {
    let cfg = load_config(&rig.config).unwrap();
    let images = parse_images_text(&std::fs::read(rig3_dir().join("sparse/images.txt")).unwrap()).unwrap();
    let (scene, per_view) = rig_streaks(&cfg, cfg.rain_density * 6.0, 0.0);
    let k = [300.0, 300.0, 160.0, 120.0];
    let mut ok = cfg.wind_strength == 0.0;
    let mut parts = Vec::new();
    for (view, streaks) in scene.views.iter().zip(&per_view) {
        let im = images.iter().find(|r| r.name == view.image_name).unwrap();
        let el = elevation_oracle_deg(im.qvec);
        // endpoints re-projected by the oracle from the drop's start and end
        let drops = sample_drops(&RainParams { omega_den: cfg.rain_density * 6.0, ..cfg.rain_params() }, &scene.volume, 0.0);
        let segs: Vec<(Px, Px, f64)> = streaks
            .iter()
            .map(|s| {
                let d = &drops[s.drop_id as usize];
                let end = d.position + d.velocity * cfg.exposure;
                let (u0, v0, _) = project_oracle(k, im.qvec, im.tvec, d.position.into());
                let (u1, v1, _) = project_oracle(k, im.qvec, im.tvec, end.into());
                ((u0, v0), (u1, v1), s.mid.x)
            })
            .collect();
        if el.abs() < 1e-9 {
            let angles: Vec<f64> = segs
                .iter()
                .filter(|((u0, v0), (u1, v1), _)| (u1 - u0).hypot(v1 - v0) > 1e-9)
                .map(|((u0, v0), (u1, v1), _)| (u1 - u0).abs().atan2((v1 - v0).abs()).to_degrees())
                .collect();
            let within = angles.iter().filter(|a| **a <= 0.5).count();
            ok &= within == angles.len() && !angles.is_empty();
            parts.push(format!("level {within}/{} within 0.5 deg", angles.len()));
        } else {
            let (mut agree, mut counted) = (0usize, 0usize);
            for ((u0, v0), (u1, v1), mx) in &segs {
                if (u1 - u0).hypot(v1 - v0) <= 5.0 {
                    continue;
                }
                let dx = if v1 > v0 { u0 - u1 } else { u1 - u0 };
                let side = mx - k[2];
                if dx == 0.0 || side == 0.0 {
                    continue;
                }
                counted += 1;
                agree += (dx.signum() == side.signum()) as usize;
            }
            let v_frac = agree as f64 / counted.max(1) as f64;
            // looking up spreads streaks into a lambda, looking down converges them into a V
            let predicted = if el > 0.0 { 1.0 - v_frac } else { v_frac };
            ok &= counted >= 200 && predicted >= 0.95;
            parts.push(format!(
                "{:+.0} deg {} {:.1}% of {counted}",
                el,
                if el > 0.0 { "lambda" } else { "V" },
                100.0 * predicted
            ));
        }
    }
    (ok, parts.join("; "))
}

fn c4_brightness(rig: &Rig) -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let l0: [f64; 3] = std::array::from_fn(|_| rng.random_range(1e-3..=1.0));
        let gamma = rng.random_range(0.0..5.0);
        let den = rng.random_range(0.0..20.0);
        let l = ambient_from_density(l0, gamma, den).unwrap();
        for (got, base) in l.0.iter().zip(l0) {
            worst = worst.max(rel_err(*got, base * (-gamma * den).exp()));
        }
    }
    let m = SceneManifest::read(&rig.out.join("manifest.json")).unwrap();
    let mut groups: BTreeMap<(String, usize), Vec<(String, f64)>> = BTreeMap::new();
    for e in &m.entries {
        let (img, _) = read_png(&rig.out.join(&e.rainy_path)).unwrap();
        groups.entry((e.image_name.clone(), e.frame_index)).or_default().push((e.preset.clone(), img.mean_luma()));
    }
    let mut strict = 0;
    for g in groups.values() {
        let luma = |p: &str| g.iter().find(|(n, _)| n == p).unwrap().1;
        strict += (luma("light") > luma("moderate") && luma("moderate") > luma("heavy")) as usize;
    }
    (
        worst <= 1e-12 && strict == groups.len(),
        format!("max rel err {worst:.1e} over 1000 draws (<= 1e-12); luma strictly light > moderate > heavy in {strict}/{} view-frames", groups.len()),
    )
}

fn loss_oracle(img: &ImageBuffer, a: &CurveParams, obj: &Objective) -> f64 {
    let out: Vec<f64> = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| curve_oracle(v, &a.steps.iter().map(|s| s[i % 3]).collect::<Vec<_>>()))
        .collect();
    match obj {
        Objective::MseToReference(r) => out.iter().zip(&r.data).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / out.len() as f64,
        Objective::ExposureTarget { target, patch } => {
            let (w, h, p) = (img.width as usize, img.height as usize, *patch as usize);
            let mut gaps = Vec::new();
            for ty in (0..h).step_by(p) {
                for tx in (0..w).step_by(p) {
                    let mut vals = Vec::new();
                    for y in ty..(ty + p).min(h) {
                        for x in tx..(tx + p).min(w) {
                            let i = (y * w + x) * 3;
                            vals.push((out[i] + out[i + 1] + out[i + 2]) / 3.0);
                        }
                    }
                    gaps.push((vals.iter().sum::<f64>() / vals.len() as f64 - target).powi(2));
                }
            }
            gaps.iter().sum::<f64>() / gaps.len() as f64
        }
    }
}

fn c5_curve() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for draw in 0..50 {
        let (w, h) = (rng.random_range(2..12), rng.random_range(2..12));
        let img = ImageBuffer::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..=1.0)).collect());
        let params = CurveParams::new((0..4).map(|_| std::array::from_fn(|_| rng.random_range(-0.9..0.9))).collect()).unwrap();
        let obj = if draw % 2 == 0 {
            Objective::MseToReference(ImageBuffer::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..=1.0)).collect()))
        } else {
            Objective::ExposureTarget { target: rng.random_range(0.0..1.0), patch: rng.random_range(1..6) }
        };
        let (_, g) = loss_and_gradient(&img, &params, &obj).unwrap();
        let step = 1e-5;
        for s in 0..4 {
            for c in 0..3 {
                let (mut hi, mut lo) = (params.clone(), params.clone());
                hi.steps[s][c] += step;
                lo.steps[s][c] -= step;
                let fd = (loss_oracle(&img, &hi, &obj) - loss_oracle(&img, &lo, &obj)) / (2.0 * step);
                let an = g.steps[s][c];
                worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-8));
            }
        }
    }
    let mut violations = 0u64;
    let mut pairs = 0u64;
    while pairs < 1_000_000 {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let i = ImageBuffer::new(1, 1, (0..3).map(|_| rng.random_range(0.0..=1.0)).collect());
        let out = be_curve(&i, a).unwrap();
        violations += out.data.iter().filter(|v| !(0.0..=1.0).contains(*v)).count() as u64;
        pairs += 3;
    }
    let trace = enhance(&ImageBuffer::filled(1, 1, 0.5), &CurveParams::new(vec![[1.0; 3]; 4]).unwrap()).unwrap();
    let seq: Vec<f64> = trace.stages.iter().map(|s| s.data[0]).collect();
    let exact = seq == [0.5, 0.75, 0.9375, 0.99609375, 0.9999847412109375];
    (
        worst < 1e-5 && violations == 0 && exact,
        format!("gradient max rel err {worst:.1e} on 50 draws (< 1e-5); {violations} range violations in {pairs} pairs; n=4 sequence exact: {exact}"),
    )
}

/// Step size used for recovery; the default 0.05 stops short of convergence
/// within 200 iterations on this fixture.
const RECOVERY_LR: f64 = 0.5;

fn c6_recovery() -> Outcome {
    let reference = ImageBuffer::new(512, 512, midtone(512, 512, 0.3));
    let settings = FitSettings { steps: 4, lr: RECOVERY_LR, iters: 200 };
    let mut ok = true;
    let mut parts = Vec::new();
    for l in [0.5, 0.6, 0.7, 0.8, 0.9] {
        let dim = ImageBuffer::new(512, 512, reference.data.iter().map(|v| v * l).collect());
        let t = Instant::now();
        let fit = fit_params(&dim, &Objective::MseToReference(reference.clone()), &settings).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let out = enhance(&dim, &fit.params).unwrap();
        let luma_err = (out.output().mean_luma() - reference.mean_luma()).abs();
        let reduction = 1.0 - out.output().mse(&reference) / dim.mse(&reference);
        ok &= luma_err < 0.02 && reduction >= 0.6 && secs < 10.0;
        parts.push(format!("L={l}: luma err {luma_err:.4}, mse -{:.1}%, {secs:.1} s", 100.0 * reduction));
    }
    (ok, format!("lr {RECOVERY_LR}; {}", parts.join("; ")))
}

fn c7_colmap() -> Outcome {
    let root = workspace_root().join("fixtures/colmap");
    let read = |p: &str| std::fs::read(root.join(p)).unwrap();
    let ct = parse_cameras_text(&read("text/cameras.txt")).unwrap();
    let it = parse_images_text(&read("text/images.txt")).unwrap();
    let cb = parse_cameras_binary(&read("bin/cameras.bin")[..]).unwrap();
    let ib = parse_images_binary(&read("bin/images.bin")[..]).unwrap();

    let text_fixed = parse_cameras_text(&serialize_cameras_text(&ct)).unwrap() == ct
        && parse_images_text(&serialize_images_text(&it)).unwrap() == it;
    let bin_fixed = serialize_cameras_binary(&cb).unwrap() == read("bin/cameras.bin")
        && serialize_images_binary(&ib) == read("bin/images.bin");

    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
    let cams_eq = ct.len() == cb.len()
        && ct.iter().zip(&cb).all(|(a, b)| {
            (a.camera_id, &a.model_name, a.width, a.height) == (b.camera_id, &b.model_name, b.width, b.height)
                && close(&a.params, &b.params)
        });
    let imgs_eq = it.len() == ib.len()
        && it.iter().zip(&ib).all(|(a, b)| {
            (a.image_id, a.camera_id, &a.name) == (b.image_id, b.camera_id, &b.name)
                && close(&a.qvec, &b.qvec)
                && close(&a.tvec, &b.tvec)
                && a.points2d.len() == b.points2d.len()
                && a.points2d.iter().zip(&b.points2d).all(|(p, q)| {
                    close(&[p.x, p.y], &[q.x, q.y]) && p.point3d_id == q.point3d_id
                })
        });

    let errors = [
        matches!(parse_cameras_text(&read("malformed/cameras_arity.txt")), Err(ColmapError::Parse { .. })),
        matches!(parse_cameras_text(&read("malformed/cameras_bad_number.txt")), Err(ColmapError::Parse { .. })),
        matches!(parse_images_text(&read("malformed/images_missing_line.txt")), Err(ColmapError::Parse { .. })),
        matches!(parse_images_text(&read("malformed/images_bad_points.txt")), Err(ColmapError::Parse { .. })),
        matches!(parse_cameras_binary(&read("malformed/cameras_truncated.bin")[..]), Err(ColmapError::TruncatedStream(_))),
        matches!(parse_images_binary(&read("malformed/images_truncated.bin")[..]), Err(ColmapError::TruncatedStream(_))),
        matches!(parse_cameras_binary(&read("malformed/cameras_unknown_model.bin")[..]), Err(ColmapError::UnknownModelId(_))),
    ];
    let raised = errors.iter().filter(|e| **e).count();
    (
        text_fixed && bin_fixed && cams_eq && imgs_eq && raised == errors.len(),
        format!(
            "text fixed point {text_fixed}, binary fixed point {bin_fixed}, text/binary equal {}, malformed errors {raised}/{}",
            cams_eq && imgs_eq,
            errors.len()
        ),
    )
}

fn c8_histograms(rig: &Rig) -> Outcome {
    let report = validate(&rig.out.join("manifest.json"), 0).unwrap();
    let b = &report.brightness;
    let m = SceneManifest::read(&rig.out.join("manifest.json")).unwrap();
    let mut conserved = true;
    for p in &b.presets {
        let images = m.entries.iter().filter(|e| e.preset == p.preset).count() as u64;
        conserved &= p.histogram.iter().sum::<u64>() == images * 320 * 240 && p.histogram_total == p.pixel_count;
    }
    let mean = |name: &str| b.presets.iter().find(|p| p.preset == name).map(|p| p.histogram_mean).unwrap_or(f64::NAN);
    let ordered = mean("light") > mean("moderate") && mean("moderate") > mean("heavy");
    (
        conserved && ordered && b.passed && b.presets.len() == 3,
        format!(
            "histogram means light {:.4} > moderate {:.4} > heavy {:.4}: {ordered}; counts conserved: {conserved}",
            mean("light"),
            mean("moderate"),
            mean("heavy")
        ),
    )
}

fn main() {
    let rig = rig();
    let criteria: Vec<Criterion> = vec![
        ("1 determinism", Box::new(|| c1_determinism(&rig))),
        ("2 multi-view consistency", Box::new(|| c2_reprojection(&rig))),
        ("3 perspective heterogeneity", Box::new(|| c3_patterns(&rig))),
        ("4 brightness dynamicity", Box::new(|| c4_brightness(&rig))),
        ("5 curve correctness", Box::new(c5_curve)),
        ("6 visibility recovery", Box::new(c6_recovery)),
        ("7 colmap parsing", Box::new(c7_colmap)),
        ("8 histogram validation", Box::new(|| c8_histograms(&rig))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += !ok as usize;
        println!("[{}] criterion {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
