//! COLMAP sparse reconstruction files (`cameras.*`, `images.*`).
//!
//! Both the text and the little-endian binary layouts are supported.
//! Binary layout:
//!
//! ```text
//! cameras.bin: u64 count, then per camera
//!     u32 camera_id, i32 model_id, u64 width, u64 height, f64 params[arity(model)]
//! images.bin:  u64 count, then per image
//!     u32 image_id, f64 qw qx qy qz, f64 tx ty tz, u32 camera_id,
//!     NUL-terminated name, u64 num_points2d, (f64 x, f64 y, i64 point3d_id)*
//! ```
//!
//! `points3D` files are never read.

use crate::camera::{Camera, GeometryError, Intrinsics, Pose, Vec3};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Read};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ColmapError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("binary stream truncated while reading {0}")]
    TruncatedStream(&'static str),
    #[error("unknown camera model id {0}")]
    UnknownModelId(i32),
    #[error("camera model {0} has no binary id")]
    UnknownModel(String),
    #[error("camera model {0} is not supported (expected SIMPLE_PINHOLE or PINHOLE)")]
    UnsupportedCameraModel(String),
    #[error("image {image_id} references missing camera {camera_id}")]
    DanglingCameraId { image_id: u32, camera_id: u32 },
    #[error("image {image_id}: {source}")]
    Geometry {
        image_id: u32,
        #[source]
        source: GeometryError,
    },
    #[error("bucket counts must be positive")]
    InvalidGrid,
    #[error("no cameras/images files found in {0}")]
    MissingFiles(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Known camera models: `(binary id, name, parameter count)`.
const MODELS: &[(i32, &str, usize)] = &[
    (0, "SIMPLE_PINHOLE", 3),
    (1, "PINHOLE", 4),
    (2, "SIMPLE_RADIAL", 4),
    (3, "RADIAL", 5),
    (4, "OPENCV", 8),
    (5, "OPENCV_FISHEYE", 8),
    (6, "FULL_OPENCV", 12),
    (7, "FOV", 5),
    (8, "SIMPLE_RADIAL_FISHEYE", 4),
    (9, "RADIAL_FISHEYE", 5),
    (10, "THIN_PRISM_FISHEYE", 12),
    (11, "RAD_TAN_THIN_PRISM_FISHEYE", 16),
];

fn model_by_name(name: &str) -> Option<(i32, usize)> {
    MODELS
        .iter()
        .find(|(_, n, _)| *n == name)
        .map(|(id, _, arity)| (*id, *arity))
}

fn model_by_id(id: i32) -> Option<(&'static str, usize)> {
    MODELS
        .iter()
        .find(|(i, _, _)| *i == id)
        .map(|(_, name, arity)| (*name, *arity))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRecord {
    pub camera_id: u32,
    /// Kept verbatim; unknown names survive text parsing.
    pub model_name: String,
    pub width: u64,
    pub height: u64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
    /// `-1` when the observation has no triangulated point.
    pub point3d_id: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: u32,
    /// `(w, x, y, z)`, world-to-camera.
    pub qvec: [f64; 4],
    pub tvec: [f64; 3],
    pub camera_id: u32,
    pub name: String,
    pub points2d: Vec<Point2D>,
}

fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Already-unit quaternions are left untouched so serialization is a fixed point.
    if norm == 0.0 || !norm.is_finite() || (norm - 1.0).abs() <= 1e-12 {
        q
    } else {
        q.map(|v| v / norm)
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> ColmapError {
    ColmapError::Parse {
        line,
        reason: reason.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, ColmapError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} {tok:?}")))
}

fn text_lines(bytes: &[u8]) -> Result<Vec<&str>, ColmapError> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(0, format!("not UTF-8: {e}")))?;
    Ok(text.lines().collect())
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn parse_cameras_text(bytes: &[u8]) -> Result<Vec<CameraRecord>, ColmapError> {
    let mut out = Vec::new();
    for (idx, line) in text_lines(bytes)?.into_iter().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let n = idx + 1;
        let mut toks = line.split_whitespace();
        let camera_id = field(toks.next(), n, "camera id")?;
        let model_name: String = field(toks.next(), n, "model name")?;
        let width: u64 = field(toks.next(), n, "width")?;
        let height: u64 = field(toks.next(), n, "height")?;
        if width == 0 || height == 0 {
            return Err(parse_err(n, "image size must be positive"));
        }
        let params = toks
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(n, format!("invalid param {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some((_, arity)) = model_by_name(&model_name) {
            if params.len() != arity {
                return Err(parse_err(
                    n,
                    format!("{model_name} expects {arity} params, got {}", params.len()),
                ));
            }
        }
        out.push(CameraRecord {
            camera_id,
            model_name,
            width,
            height,
            params,
        });
    }
    Ok(out)
}

pub fn parse_images_text(bytes: &[u8]) -> Result<Vec<ImageRecord>, ColmapError> {
    let lines = text_lines(bytes)?;
    let mut out = Vec::new();
    let mut idx = 0;
    while idx < lines.len() {
        if is_skippable(lines[idx]) {
            idx += 1;
            continue;
        }
        let n = idx + 1;
        let toks: Vec<&str> = lines[idx].split_whitespace().collect();
        if toks.len() < 10 {
            return Err(parse_err(n, format!("expected 10 fields, got {}", toks.len())));
        }
        let mut it = toks.iter().copied();
        let image_id = field(it.next(), n, "image id")?;
        let mut qvec = [0.0; 4];
        for q in qvec.iter_mut() {
            *q = field(it.next(), n, "qvec component")?;
        }
        let mut tvec = [0.0; 3];
        for t in tvec.iter_mut() {
            *t = field(it.next(), n, "tvec component")?;
        }
        let camera_id = field(it.next(), n, "camera id")?;
        let name = toks[9..].join(" ");

        let pn = idx + 2;
        let points_line = lines
            .get(idx + 1)
            .ok_or_else(|| parse_err(pn, "missing POINTS2D line"))?;
        let ptoks: Vec<&str> = points_line.split_whitespace().collect();
        if !ptoks.len().is_multiple_of(3) {
            return Err(parse_err(pn, "POINTS2D line must hold (x, y, id) triples"));
        }
        let points2d = ptoks
            .chunks(3)
            .map(|c| {
                Ok(Point2D {
                    x: field(Some(c[0]), pn, "point x")?,
                    y: field(Some(c[1]), pn, "point y")?,
                    point3d_id: field(Some(c[2]), pn, "point3d id")?,
                })
            })
            .collect::<Result<Vec<_>, ColmapError>>()?;

        out.push(ImageRecord {
            image_id,
            qvec: normalize_quat(qvec),
            tvec,
            camera_id,
            name,
            points2d,
        });
        idx += 2;
    }
    Ok(out)
}

fn truncated(what: &'static str) -> impl Fn(io::Error) -> ColmapError {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ColmapError::TruncatedStream(what)
        } else {
            ColmapError::Io(e)
        }
    }
}

pub fn parse_cameras_binary(mut r: impl Read) -> Result<Vec<CameraRecord>, ColmapError> {
    let count = r.read_u64::<LittleEndian>().map_err(truncated("camera count"))?;
    let mut out = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let camera_id = r.read_u32::<LittleEndian>().map_err(truncated("camera id"))?;
        let model_id = r.read_i32::<LittleEndian>().map_err(truncated("model id"))?;
        let width = r.read_u64::<LittleEndian>().map_err(truncated("width"))?;
        let height = r.read_u64::<LittleEndian>().map_err(truncated("height"))?;
        let (name, arity) = model_by_id(model_id).ok_or(ColmapError::UnknownModelId(model_id))?;
        let mut params = vec![0.0; arity];
        r.read_f64_into::<LittleEndian>(&mut params)
            .map_err(truncated("camera params"))?;
        out.push(CameraRecord {
            camera_id,
            model_name: name.to_string(),
            width,
            height,
            params,
        });
    }
    Ok(out)
}

pub fn parse_images_binary(mut r: impl Read) -> Result<Vec<ImageRecord>, ColmapError> {
    let count = r.read_u64::<LittleEndian>().map_err(truncated("image count"))?;
    let mut out = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let image_id = r.read_u32::<LittleEndian>().map_err(truncated("image id"))?;
        let mut qvec = [0.0; 4];
        r.read_f64_into::<LittleEndian>(&mut qvec)
            .map_err(truncated("qvec"))?;
        let mut tvec = [0.0; 3];
        r.read_f64_into::<LittleEndian>(&mut tvec)
            .map_err(truncated("tvec"))?;
        let camera_id = r.read_u32::<LittleEndian>().map_err(truncated("camera id"))?;
        let mut name = Vec::new();
        loop {
            match r.read_u8().map_err(truncated("image name"))? {
                0 => break,
                b => name.push(b),
            }
        }
        let name = String::from_utf8(name).map_err(|_| parse_err(0, "image name is not UTF-8"))?;
        let npts = r.read_u64::<LittleEndian>().map_err(truncated("point count"))?;
        let mut points2d = Vec::with_capacity(npts.min(1 << 20) as usize);
        for _ in 0..npts {
            let x = r.read_f64::<LittleEndian>().map_err(truncated("point x"))?;
            let y = r.read_f64::<LittleEndian>().map_err(truncated("point y"))?;
            let point3d_id = r.read_i64::<LittleEndian>().map_err(truncated("point3d id"))?;
            points2d.push(Point2D { x, y, point3d_id });
        }
        out.push(ImageRecord {
            image_id,
            qvec: normalize_quat(qvec),
            tvec,
            camera_id,
            name,
            points2d,
        });
    }
    Ok(out)
}

pub fn serialize_cameras_text(cameras: &[CameraRecord]) -> Vec<u8> {
    let mut s = String::from("# Camera list with one line of data per camera:\n");
    s.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    s.push_str(&format!("# Number of cameras: {}\n", cameras.len()));
    for c in cameras {
        s.push_str(&format!("{} {} {} {}", c.camera_id, c.model_name, c.width, c.height));
        for p in &c.params {
            s.push_str(&format!(" {p}"));
        }
        s.push('\n');
    }
    s.into_bytes()
}

pub fn serialize_images_text(images: &[ImageRecord]) -> Vec<u8> {
    let mut s = String::from("# Image list with two lines of data per image:\n");
    s.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
    s.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    s.push_str(&format!("# Number of images: {}\n", images.len()));
    for im in images {
        let [qw, qx, qy, qz] = im.qvec;
        let [tx, ty, tz] = im.tvec;
        s.push_str(&format!(
            "{} {qw} {qx} {qy} {qz} {tx} {ty} {tz} {} {}\n",
            im.image_id, im.camera_id, im.name
        ));
        let pts: Vec<String> = im
            .points2d
            .iter()
            .map(|p| format!("{} {} {}", p.x, p.y, p.point3d_id))
            .collect();
        s.push_str(&pts.join(" "));
        s.push('\n');
    }
    s.into_bytes()
}

pub fn serialize_cameras_binary(cameras: &[CameraRecord]) -> Result<Vec<u8>, ColmapError> {
    let mut w = Vec::new();
    w.write_u64::<LittleEndian>(cameras.len() as u64)?;
    for c in cameras {
        let (model_id, arity) =
            model_by_name(&c.model_name).ok_or_else(|| ColmapError::UnknownModel(c.model_name.clone()))?;
        if c.params.len() != arity {
            return Err(ColmapError::UnknownModel(format!(
                "{} with {} params",
                c.model_name,
                c.params.len()
            )));
        }
        w.write_u32::<LittleEndian>(c.camera_id)?;
        w.write_i32::<LittleEndian>(model_id)?;
        w.write_u64::<LittleEndian>(c.width)?;
        w.write_u64::<LittleEndian>(c.height)?;
        for p in &c.params {
            w.write_f64::<LittleEndian>(*p)?;
        }
    }
    Ok(w)
}

pub fn serialize_images_binary(images: &[ImageRecord]) -> Vec<u8> {
    let mut w = Vec::new();
    // Writes into a Vec cannot fail.
    let _ = write_images_binary(&mut w, images);
    w
}

fn write_images_binary(w: &mut Vec<u8>, images: &[ImageRecord]) -> io::Result<()> {
    w.write_u64::<LittleEndian>(images.len() as u64)?;
    for im in images {
        w.write_u32::<LittleEndian>(im.image_id)?;
        for q in im.qvec {
            w.write_f64::<LittleEndian>(q)?;
        }
        for t in im.tvec {
            w.write_f64::<LittleEndian>(t)?;
        }
        w.write_u32::<LittleEndian>(im.camera_id)?;
        w.extend_from_slice(im.name.as_bytes());
        w.push(0);
        w.write_u64::<LittleEndian>(im.points2d.len() as u64)?;
        for p in &im.points2d {
            w.write_f64::<LittleEndian>(p.x)?;
            w.write_f64::<LittleEndian>(p.y)?;
            w.write_i64::<LittleEndian>(p.point3d_id)?;
        }
    }
    Ok(())
}

/// Reads `cameras` and `images` from a sparse model directory, preferring the
/// binary files when both exist.
pub fn read_model(dir: &Path) -> Result<(Vec<CameraRecord>, Vec<ImageRecord>), ColmapError> {
    let (cb, ib) = (dir.join("cameras.bin"), dir.join("images.bin"));
    if cb.is_file() && ib.is_file() {
        let cams = parse_cameras_binary(io::BufReader::new(std::fs::File::open(cb)?))?;
        let imgs = parse_images_binary(io::BufReader::new(std::fs::File::open(ib)?))?;
        return Ok((cams, imgs));
    }
    let (ct, it) = (dir.join("cameras.txt"), dir.join("images.txt"));
    if ct.is_file() && it.is_file() {
        let cams = parse_cameras_text(&std::fs::read(ct)?)?;
        let imgs = parse_images_text(&std::fs::read(it)?)?;
        return Ok((cams, imgs));
    }
    Err(ColmapError::MissingFiles(dir.display().to_string()))
}

/// Pinhole intrinsics of a record; only `SIMPLE_PINHOLE` and `PINHOLE` qualify.
pub fn intrinsics_of(record: &CameraRecord) -> Result<Intrinsics, ColmapError> {
    let unsupported = || ColmapError::UnsupportedCameraModel(record.model_name.clone());
    let (fx, fy, cx, cy) = match (record.model_name.as_str(), record.params.as_slice()) {
        ("SIMPLE_PINHOLE", &[f, cx, cy]) => (f, f, cx, cy),
        ("PINHOLE", &[fx, fy, cx, cy]) => (fx, fy, cx, cy),
        _ => return Err(unsupported()),
    };
    let width = u32::try_from(record.width).map_err(|_| unsupported())?;
    let height = u32::try_from(record.height).map_err(|_| unsupported())?;
    Intrinsics::new(fx, fy, cx, cy, width, height).map_err(|source| ColmapError::Geometry {
        image_id: 0,
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointEntry {
    pub camera: Camera,
    pub image_id: u32,
    pub name: String,
    pub elevation_bucket: usize,
    pub azimuth_bucket: usize,
}

/// Cameras arranged on a grid of `elevation_buckets x azimuth_buckets`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointMatrix {
    pub entries: Vec<ViewpointEntry>,
    pub elevation_buckets: usize,
    pub azimuth_buckets: usize,
}

fn bucket(value: f64, lo: f64, span: f64, count: usize) -> usize {
    let b = ((value - lo) / span * count as f64).floor();
    (b.max(0.0) as usize).min(count - 1)
}

/// Uniform partition of `[-pi/2, pi/2]` into `w` elevation buckets.
pub fn elevation_bucket(elevation: f64, w: usize) -> usize {
    bucket(elevation, -PI / 2.0, PI, w)
}

/// Uniform partition of `(-pi, pi]` into `u` azimuth buckets.
pub fn azimuth_bucket(azimuth: f64, u: usize) -> usize {
    bucket(azimuth, -PI, 2.0 * PI, u)
}

pub fn build_viewpoint_matrix(
    cameras: &[CameraRecord],
    images: &[ImageRecord],
    up: &Vec3,
    w: usize,
    u: usize,
) -> Result<ViewpointMatrix, ColmapError> {
    if w == 0 || u == 0 {
        return Err(ColmapError::InvalidGrid);
    }
    let by_id: HashMap<u32, &CameraRecord> = cameras.iter().map(|c| (c.camera_id, c)).collect();
    let mut entries = Vec::with_capacity(images.len());
    for im in images {
        let rec = by_id.get(&im.camera_id).ok_or(ColmapError::DanglingCameraId {
            image_id: im.image_id,
            camera_id: im.camera_id,
        })?;
        let geo = |source| ColmapError::Geometry {
            image_id: im.image_id,
            source,
        };
        let intrinsics = intrinsics_of(rec).map_err(|e| match e {
            ColmapError::Geometry { source, .. } => geo(source),
            other => other,
        })?;
        let pose = Pose::new(im.qvec, Vec3::from(im.tvec)).map_err(geo)?;
        let camera = Camera::new(intrinsics, pose, up, im.image_id.to_string()).map_err(geo)?;
        let (el, az) = (camera.angles.elevation, camera.angles.azimuth);
        if !(el.is_finite() && az.is_finite()) {
            return Err(geo(GeometryError::InvalidPose("non-finite view angles".into())));
        }
        entries.push(ViewpointEntry {
            elevation_bucket: elevation_bucket(el, w),
            azimuth_bucket: azimuth_bucket(az, u),
            camera,
            image_id: im.image_id,
            name: im.name.clone(),
        });
    }
    entries.sort_by_key(|e| (e.elevation_bucket, e.azimuth_bucket, e.image_id));
    Ok(ViewpointMatrix {
        entries,
        elevation_buckets: w,
        azimuth_buckets: u,
    })
}
