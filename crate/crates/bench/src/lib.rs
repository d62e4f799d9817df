//! Fixture builders shared by the benchmarks.

use rainview::rain::volume_from_cameras;
use rainview::{Camera, ImageBuffer, Intrinsics, Pose, RainParams, RainVolume, Vec3};

pub fn up() -> Vec3 {
    Vec3::new(0.0, -1.0, 0.0)
}

/// 640x480 pinhole camera at the origin pitched by `pitch_deg`
/// (positive looks up).
pub fn pitched_camera(pitch_deg: f64) -> Camera {
    let a = pitch_deg.to_radians();
    let forward = Vec3::new(0.0, -a.sin(), a.cos());
    let pose = Pose::look_at(Vec3::zeros(), forward, up()).expect("valid pose");
    let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).expect("valid intrinsics");
    Camera::new(k, pose, &up(), "bench").expect("valid camera")
}

pub fn rain_scene(density: f64) -> (RainParams, RainVolume, Camera) {
    let cam = pitched_camera(-20.0);
    let params = RainParams {
        omega_den: density,
        ..Default::default()
    };
    let volume = volume_from_cameras(std::slice::from_ref(&cam), params.omega_dep, 1.0, 42, up()).expect("volume");
    (params, volume, cam)
}

pub fn midtone(width: u32, height: u32) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, |x, y, c| {
        let s = (x as f64 / 37.0 + c as f64).sin() * (y as f64 / 23.0).cos();
        0.5 + 0.3 * s
    })
}
