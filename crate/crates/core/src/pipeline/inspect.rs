use super::Result;
use crate::camera::{validate_up, Vec3};
use crate::colmap::{build_viewpoint_matrix, read_model};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRow {
    pub view_id: String,
    pub name: String,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub degenerate_azimuth: bool,
    pub bucket: (usize, usize),
}

/// One row per image of the model in `colmap_dir`, sorted by elevation then
/// azimuth.
pub fn inspect_poses(colmap_dir: &Path, up: &Vec3, w: usize, u: usize) -> Result<Vec<PoseRow>> {
    validate_up(up)?;
    let (cameras, images) = read_model(colmap_dir)?;
    let z = build_viewpoint_matrix(&cameras, &images, up, w, u)?;
    let mut rows: Vec<PoseRow> = z
        .entries
        .into_iter()
        .map(|e| PoseRow {
            view_id: e.camera.view_id.clone(),
            name: e.name,
            elevation_deg: e.camera.angles.elevation.to_degrees(),
            azimuth_deg: e.camera.angles.azimuth.to_degrees(),
            degenerate_azimuth: e.camera.angles.degenerate_azimuth,
            bucket: (e.elevation_bucket, e.azimuth_bucket),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.elevation_deg
            .total_cmp(&b.elevation_deg)
            .then(a.azimuth_deg.total_cmp(&b.azimuth_deg))
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(rows)
}

pub fn format_pose_table(rows: &[PoseRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:<32} {:>12} {:>12} {:>8}", "view_id", "name", "elev_deg", "azim_deg", "bucket");
    for r in rows {
        let bucket = format!("{},{}", r.bucket.0, r.bucket.1);
        let flag = if r.degenerate_azimuth { " (degenerate azimuth)" } else { "" };
        let _ = writeln!(
            s,
            "{:<8} {:<32} {:>12.6} {:>12.6} {:>8}{flag}",
            r.view_id, r.name, r.elevation_deg, r.azimuth_deg, bucket
        );
    }
    s
}
