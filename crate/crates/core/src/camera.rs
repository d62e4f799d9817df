//! Pinhole camera model with COLMAP conventions.
//!
//! Poses are world-to-camera: `x_cam = R * x_world + t`, camera axes are
//! x right, y down, z forward. Pixel centers sit at half-integer
//! coordinates, so the image covers `[0, width) x [0, height)`.

use nalgebra::{Matrix3, Vector2, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Default world up-vector (COLMAP y-down camera at identity pose).
pub const DEFAULT_UP: [f64; 3] = [0.0, -1.0, 0.0];

const QUAT_TOLERANCE: f64 = 1e-9;
const DEGENERATE_AZIMUTH_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("up-vector must be unit length and finite")]
    InvalidUp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(
                "image size must be nonzero".into(),
            ));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }
}

/// World-to-camera rigid transform. The quaternion is stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    quat: [f64; 4],
    translation: Vec3,
    rotation: Matrix3<f64>,
}

impl Pose {
    pub fn new(quat: [f64; 4], translation: Vec3) -> Result<Self, GeometryError> {
        let norm = quat.iter().map(|q| q * q).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > QUAT_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "quaternion norm {norm} is not 1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            quat,
            translation,
            rotation: quat_to_matrix(quat),
        })
    }

    pub fn identity() -> Self {
        Self::new([1.0, 0.0, 0.0, 0.0], Vec3::zeros()).expect("identity pose")
    }

    /// Camera placed at `center` looking along `forward`, with image-down
    /// aligned to `-up` as far as the forward direction allows.
    pub fn look_at(center: Vec3, forward: Vec3, up: Vec3) -> Result<Self, GeometryError> {
        let z = forward
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidPose("zero forward vector".into()))?;
        let x = (-up)
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidPose("forward parallel to up".into()))?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let quat = matrix_to_quat(&rotation);
        Self::new(quat, -(rotation * center))
    }

    pub fn quaternion(&self) -> [f64; 4] {
        self.quat
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Shepperd's method. The returned quaternion has `w >= 0`.
pub fn matrix_to_quat(m: &Matrix3<f64>) -> [f64; 4] {
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        ]
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        ]
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        ]
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        [
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        ]
    };
    let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| sign * v / norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewAngles {
    /// Radians, positive when looking above the horizontal plane.
    pub elevation: f64,
    /// Radians in `(-pi, pi]`.
    pub azimuth: f64,
    /// Set when the optical axis is (anti)parallel to up; azimuth is then 0.
    pub degenerate_azimuth: bool,
}

/// Orthonormal basis `(e1, e2)` of the plane orthogonal to `up`.
///
/// `e1` is the world axis most orthogonal to `up`, projected into the plane.
/// Ties prefer z, then x, then y, so the COLMAP forward axis is the reference
/// whenever it qualifies. `e2 = up x e1`.
pub fn horizontal_basis(up: &Vec3) -> (Vec3, Vec3) {
    let mut best = 2usize;
    for axis in [0usize, 1] {
        if up[axis].abs() < up[best].abs() {
            best = axis;
        }
    }
    let mut reference = Vec3::zeros();
    reference[best] = 1.0;
    let e1 = (reference - up * up.dot(&reference)).normalize();
    let e2 = up.cross(&e1);
    (e1, e2)
}

pub fn validate_up(up: &Vec3) -> Result<(), GeometryError> {
    if up.iter().all(|v| v.is_finite()) && (up.norm() - 1.0).abs() <= 1e-9 {
        Ok(())
    } else {
        Err(GeometryError::InvalidUp)
    }
}

/// Optical axis in world coordinates, `R^T (0, 0, 1)`.
pub fn view_direction(pose: &Pose) -> Vec3 {
    pose.rotation.row(2).transpose()
}

pub fn view_angles(pose: &Pose, up: &Vec3) -> ViewAngles {
    direction_angles(&view_direction(pose), up)
}

/// Elevation and azimuth of an arbitrary unit direction.
pub fn direction_angles(d: &Vec3, up: &Vec3) -> ViewAngles {
    let s = d.dot(up).clamp(-1.0, 1.0);
    let elevation = s.asin();
    if s.abs() > 1.0 - DEGENERATE_AZIMUTH_EPS {
        return ViewAngles {
            elevation,
            azimuth: 0.0,
            degenerate_azimuth: true,
        };
    }
    let (e1, e2) = horizontal_basis(up);
    let mut azimuth = d.dot(&e2).atan2(d.dot(&e1));
    if azimuth <= -PI {
        azimuth = PI;
    }
    ViewAngles {
        elevation,
        azimuth,
        degenerate_azimuth: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub angles: ViewAngles,
    pub view_id: String,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        pose: Pose,
        up: &Vec3,
        view_id: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        validate_up(up)?;
        Ok(Self {
            intrinsics,
            angles: view_angles(&pose, up),
            pose,
            view_id: view_id.into(),
        })
    }

    pub fn center(&self) -> Vec3 {
        self.pose.center()
    }
}

/// Projects a world point to `(pixel, depth)`. The pixel is not culled.
pub fn project(point: &Vec3, camera: &Camera) -> Result<(Vec2, f64), GeometryError> {
    let pc = camera.pose.world_to_camera(point);
    project_camera_frame(&pc, &camera.intrinsics)
}

pub(crate) fn project_camera_frame(
    pc: &Vec3,
    k: &Intrinsics,
) -> Result<(Vec2, f64), GeometryError> {
    if !(pc.z > 0.0) {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    let pixel = Vec2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
    Ok((pixel, pc.z))
}

/// Inverse of [`project`]: the world point seen at `pixel` with camera depth `depth`.
pub fn unproject(pixel: &Vec2, depth: f64, camera: &Camera) -> Vec3 {
    let k = &camera.intrinsics;
    let pc = Vec3::new(
        (pixel.x - k.cx) / k.fx * depth,
        (pixel.y - k.cy) / k.fy * depth,
        depth,
    );
    camera.pose.camera_to_world(&pc)
}

pub fn in_image(pixel: &Vec2, k: &Intrinsics) -> bool {
    pixel.x >= 0.0 && pixel.x < k.width as f64 && pixel.y >= 0.0 && pixel.y < k.height as f64
}

pub fn frustum_contains(point: &Vec3, camera: &Camera, near: f64, far: f64) -> bool {
    match project(point, camera) {
        Ok((pixel, depth)) => depth >= near && depth <= far && in_image(&pixel, &camera.intrinsics),
        Err(_) => false,
    }
}
