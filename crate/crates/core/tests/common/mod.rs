//! Independent oracles and fixture helpers shared by the integration tests.
//! Nothing here calls into the geometry or curve code under test.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub type M3 = [[f64; 3]; 3];

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub fn mat_vec(m: &M3, v: [f64; 3]) -> [f64; 3] {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// Rotation by `angle` about unit `axis`, R = I + sin(a) K + (1 - cos(a)) K^2.
pub fn rodrigues(axis: [f64; 3], angle: f64) -> M3 {
    let n = norm(axis);
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let k = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
    let mut k2 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k2[i][j] = (0..3).map(|l| k[i][l] * k[l][j]).sum();
        }
    }
    let (s, c) = angle.sin_cos();
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = if i == j { 1.0 } else { 0.0 } + s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    r
}

/// Rotation matrix of a unit quaternion (w, x, y, z), via its axis-angle form.
pub fn quat_oracle(q: [f64; 4]) -> M3 {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let s = (x * x + y * y + z * z).sqrt();
    if s < 1e-300 {
        return rodrigues([1.0, 0.0, 0.0], 0.0);
    }
    rodrigues([x, y, z], 2.0 * s.atan2(w))
}

/// Axis-angle to quaternion (w, x, y, z).
pub fn axis_angle_quat(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let n = norm(axis);
    let (s, c) = (angle / 2.0).sin_cos();
    [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]
}

/// Pinhole projection `K (R p + t)`, returning (u, v, depth).
pub fn project_oracle(k: [f64; 4], q: [f64; 4], t: [f64; 3], p: [f64; 3]) -> (f64, f64, f64) {
    let r = quat_oracle(q);
    let pc = mat_vec(&r, p);
    let pc = [pc[0] + t[0], pc[1] + t[1], pc[2] + t[2]];
    (k[0] * pc[0] / pc[2] + k[2], k[1] * pc[1] / pc[2] + k[3], pc[2])
}

/// Elevation (deg) of the optical axis `R^T e_z` against world up `(0, -1, 0)`.
pub fn elevation_oracle_deg(q: [f64; 4]) -> f64 {
    let r = quat_oracle(q);
    let d = [r[2][0], r[2][1], r[2][2]];
    (-d[1] / norm(d)).asin().to_degrees()
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn rig3_dir() -> PathBuf {
    workspace_root().join("fixtures/rig3")
}

/// Writes a copy of the bundled rig config into `dir` with absolute input
/// paths and `dir/<out>` as output, returning the config path.
pub fn rig3_config(dir: &Path, out: &str, extra: &str) -> PathBuf {
    let rig = rig3_dir();
    let base = std::fs::read_to_string(rig.join("config.toml")).unwrap();
    let mut text = format!(
        "colmap_dir = {:?}\nbackground_dir = {:?}\noutput_dir = {:?}\n",
        rig.join("sparse"),
        rig.join("images"),
        dir.join(out)
    );
    let overridden: Vec<&str> = extra.lines().filter_map(|l| l.split('=').next()).map(str::trim).collect();
    for line in base.lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        if matches!(key, "colmap_dir" | "background_dir" | "output_dir") || overridden.contains(&key) {
            continue;
        }
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(extra);
    let path = dir.join(format!("{out}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

/// Smooth mid-tone RGB values in [0.2, 0.8].
pub fn midtone(w: u32, h: u32, phase: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let s = ((x as f64 / 37.0 + c as f64 + phase).sin() * (y as f64 / 23.0 - phase).cos()) * 0.5 + 0.5;
                v.push(0.2 + 0.6 * s);
            }
        }
    }
    v
}

/// Recursive curve `I + A I (1 - I)` applied `a.len()` times to one value.
pub fn curve_oracle(i: f64, a: &[f64]) -> f64 {
    a.iter().fold(i, |x, &ai| x + ai * x * (1.0 - x))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
