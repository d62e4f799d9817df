//! Projection of raindrops into motion-blur streaks and their rasterization
//! into a rain mask.
//!
//! A drop at `p` with velocity `v` sweeps `p .. p + v * exposure` during the
//! exposure. Both endpoints and the world midpoint are projected
//! independently into each camera, so every view sees the same 3D segment
//! and the Λ / parallel / V streak patterns fall out of the projection.

use crate::camera::{in_image, project, Camera, Vec2};
use crate::rain::{sample_drops, RainParams, RainVolume, Raindrop};

pub const STREAK_PEAK: f64 = 0.8;
pub const STREAK_FALLOFF_DEPTH: f64 = 20.0;
pub const STREAK_REFERENCE_LENGTH: f64 = 20.0;
pub const MIN_STREAK_WIDTH: f64 = 0.5;
pub const DEFAULT_EXPOSURE: f64 = 1.0 / 60.0;
pub const DEFAULT_NEAR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Streak {
    pub drop_id: u64,
    /// Projected position at exposure start.
    pub p0: Vec2,
    /// Projected position at exposure end.
    pub p1: Vec2,
    /// Projection of the world-space midpoint of the swept segment.
    pub mid: Vec2,
    /// Camera depth of the world-space midpoint.
    pub depth: f64,
    pub width: f64,
    pub intensity: f64,
}

impl Streak {
    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }
}

/// Exposure and clipping settings shared by all views of a render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreakSettings {
    pub exposure: f64,
    pub near: f64,
    pub far: f64,
}

pub fn streak_for_drop(drop: &Raindrop, camera: &Camera, settings: &StreakSettings) -> Option<Streak> {
    let start = drop.position;
    let end = drop.position + drop.velocity * settings.exposure;
    let midpoint = drop.position + drop.velocity * (0.5 * settings.exposure);

    let (p0, d0) = project(&start, camera).ok()?;
    let (p1, d1) = project(&end, camera).ok()?;
    let (mid, depth) = project(&midpoint, camera).ok()?;
    if d0 < settings.near || d1 < settings.near || depth < settings.near {
        return None;
    }
    let k = &camera.intrinsics;
    let visible = |p: &Vec2, d: f64| d <= settings.far && in_image(p, k);
    if !visible(&p0, d0) && !visible(&p1, d1) {
        return None;
    }

    let width = (k.fx * drop.diameter * 1e-3 / depth).max(MIN_STREAK_WIDTH);
    let length = (p1 - p0).norm();
    let coverage = (width * STREAK_REFERENCE_LENGTH / length.max(1.0)).min(1.0);
    let intensity =
        (STREAK_PEAK * coverage / (1.0 + depth / STREAK_FALLOFF_DEPTH)).clamp(0.0, 1.0);
    if !(p0.iter().chain(p1.iter()).chain(mid.iter()).all(|v| v.is_finite())) {
        return None;
    }
    Some(Streak {
        drop_id: drop.drop_id,
        p0,
        p1,
        mid,
        depth,
        width,
        intensity,
    })
}

/// Single-channel rain intensity map, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RainMask {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl RainMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Draws each streak as a segment with a Gaussian cross-section
/// (`sigma = width / 2`, cut off at `3 sigma`). Contributions accumulate
/// unclamped in list order and are clamped to `[0, 1]` once at the end.
/// Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`.
pub fn rasterize(streaks: &[Streak], width: u32, height: u32) -> RainMask {
    let mut acc = vec![0.0f64; width as usize * height as usize];
    for s in streaks {
        if !(s.intensity > 0.0) {
            continue;
        }
        let sigma = s.width / 2.0;
        let reach = 3.0 * sigma;
        let inv = 1.0 / (2.0 * sigma * sigma);
        let x_lo = (s.p0.x.min(s.p1.x) - reach - 0.5).floor().max(0.0);
        let x_hi = (s.p0.x.max(s.p1.x) + reach - 0.5).ceil().min(width as f64 - 1.0);
        let y_lo = (s.p0.y.min(s.p1.y) - reach - 0.5).floor().max(0.0);
        let y_hi = (s.p0.y.max(s.p1.y) + reach - 0.5).ceil().min(height as f64 - 1.0);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        for y in y_lo as usize..=y_hi as usize {
            let row = y * width as usize;
            for x in x_lo as usize..=x_hi as usize {
                let c = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let d = segment_distance(c, s.p0, s.p1);
                if d <= reach {
                    acc[row + x] += s.intensity * (-d * d * inv).exp();
                }
            }
        }
    }
    for v in &mut acc {
        *v = v.clamp(0.0, 1.0);
    }
    RainMask {
        width,
        height,
        values: acc,
    }
}

/// Streaks of all drops visible in `camera`, in `drop_id` order.
pub fn streaks_for_view(
    drops: &[Raindrop],
    camera: &Camera,
    settings: &StreakSettings,
) -> Vec<Streak> {
    drops
        .iter()
        .filter_map(|d| streak_for_drop(d, camera, settings))
        .collect()
}

/// Rain mask of a single view at `time`.
pub fn render_view(
    params: &RainParams,
    volume: &RainVolume,
    camera: &Camera,
    time: f64,
    exposure: f64,
    near: f64,
) -> RainMask {
    let drops = sample_drops(params, volume, time);
    let settings = StreakSettings {
        exposure,
        near,
        far: params.omega_dep,
    };
    let streaks = streaks_for_view(&drops, camera, &settings);
    rasterize(&streaks, camera.intrinsics.width, camera.intrinsics.height)
}

/// Fraction of streaks whose upward-oriented horizontal component points
/// away from the principal column (the V pattern of a downward-looking
/// camera). Streaks no longer than `min_length` pixels, or whose horizontal
/// component or side is exactly zero, are skipped. Returns
/// `(agreeing, counted)`.
pub fn v_agreement(streaks: &[Streak], cx: f64, min_length: f64) -> (usize, usize) {
    let mut agree = 0;
    let mut counted = 0;
    for s in streaks {
        if s.length() <= min_length {
            continue;
        }
        let mut dir = s.p1 - s.p0;
        if dir.y > 0.0 {
            dir = -dir;
        }
        let side = s.mid.x - cx;
        if dir.x == 0.0 || side == 0.0 {
            continue;
        }
        counted += 1;
        if dir.x.signum() == side.signum() {
            agree += 1;
        }
    }
    (agree, counted)
}

/// Largest angle in degrees between any streak longer than `min_length`
/// and the image vertical.
pub fn max_vertical_deviation_deg(streaks: &[Streak], min_length: f64) -> Option<f64> {
    streaks
        .iter()
        .filter(|s| s.length() > min_length)
        .map(|s| {
            let d = s.p1 - s.p0;
            d.x.abs().atan2(d.y.abs()).to_degrees()
        })
        .reduce(f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Intrinsics, Pose, Vec3, DEFAULT_UP};

    fn level_camera() -> Camera {
        let k = Intrinsics::new(200.0, 200.0, 100.0, 75.0, 200, 150).unwrap();
        Camera::new(k, Pose::identity(), &Vec3::from(DEFAULT_UP), "level").unwrap()
    }

    fn settings() -> StreakSettings {
        StreakSettings {
            exposure: DEFAULT_EXPOSURE,
            near: DEFAULT_NEAR,
            far: 20.0,
        }
    }

    fn drop_at(position: Vec3) -> Raindrop {
        Raindrop {
            drop_id: 3,
            position,
            velocity: Vec3::new(0.0, 4.0, 0.0),
            diameter: 1.0,
        }
    }

    #[test]
    fn vertical_on_optical_axis() {
        let s = streak_for_drop(&drop_at(Vec3::new(0.0, 0.0, 5.0)), &level_camera(), &settings())
            .unwrap();
        assert!((s.p0.x - s.p1.x).abs() < 1e-6);
        assert_eq!(s.p0, Vec2::new(100.0, 75.0));
        assert!(s.p1.y > s.p0.y);
        assert_eq!(s.drop_id, 3);
        assert!(s.width >= MIN_STREAK_WIDTH);
        assert!(s.intensity > 0.0 && s.intensity <= 1.0);
    }

    #[test]
    fn zero_exposure_collapses() {
        let st = StreakSettings {
            exposure: 1e-12,
            ..settings()
        };
        let s = streak_for_drop(&drop_at(Vec3::new(0.3, -0.2, 4.0)), &level_camera(), &st).unwrap();
        assert!((s.p0 - s.p1).norm() < 1e-8);
        assert!((s.mid - s.p0).norm() < 1e-8);
    }

    #[test]
    fn depth_cull() {
        let cam = level_camera();
        assert!(streak_for_drop(&drop_at(Vec3::new(0.0, 0.0, 25.0)), &cam, &settings()).is_none());
        assert!(streak_for_drop(&drop_at(Vec3::new(0.0, 0.0, -2.0)), &cam, &settings()).is_none());
        assert!(streak_for_drop(&drop_at(Vec3::new(0.0, 0.0, 0.05)), &cam, &settings()).is_none());
    }

    fn horizontal(y: f64, intensity: f64) -> Streak {
        Streak {
            drop_id: 0,
            p0: Vec2::new(10.0, y),
            p1: Vec2::new(30.0, y),
            mid: Vec2::new(20.0, y),
            depth: 1.0,
            width: 2.0,
            intensity,
        }
    }

    #[test]
    fn empty_list_is_black() {
        let m = rasterize(&[], 16, 8);
        assert!(m.values.iter().all(|&v| v == 0.0));
        assert_eq!(m.values.len(), 128);
    }

    #[test]
    fn centerline_peak() {
        let m = rasterize(&[horizontal(10.5, 0.5)], 40, 20);
        let max = m.values.iter().cloned().fold(0.0, f64::max);
        assert!((0.45..=0.5).contains(&max));
        assert_eq!(m.get(20, 10), max);
        // 3 sigma = 3 px: row 14 center is 4 px away.
        assert_eq!(m.get(20, 14), 0.0);
        assert_eq!(m.get(35, 10), 0.0);
    }

    #[test]
    fn saturates_at_one() {
        let m = rasterize(&[horizontal(10.5, 0.7), horizontal(10.5, 0.7)], 40, 20);
        assert_eq!(m.get(20, 10), 1.0);
        assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn offscreen_streak_is_clipped() {
        let s = Streak {
            p0: Vec2::new(-50.0, -50.0),
            p1: Vec2::new(5.0, 5.0),
            ..horizontal(0.0, 0.5)
        };
        let m = rasterize(&[s], 10, 10);
        assert!(m.get(2, 2) > 0.0);
    }

    #[test]
    fn empty_rain_renders_black() {
        let cam = level_camera();
        let v = RainVolume::new(Vec3::repeat(-10.0), Vec3::repeat(10.0), 1, Vec3::from(DEFAULT_UP))
            .unwrap();
        let p = RainParams::default().with_density(0.0);
        let m = render_view(&p, &v, &cam, 0.0, DEFAULT_EXPOSURE, DEFAULT_NEAR);
        assert!(m.values.iter().all(|&x| x == 0.0));
    }
}
