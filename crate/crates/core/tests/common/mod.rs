#![allow(dead_code)]

use std::path::PathBuf;

use funnel_nav::geometry::{CameraModel, Landmark, Pose};
use funnel_nav::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Independent pinhole projection: body frame x forward, y left, image u to the right.
pub fn pinhole(l: &Landmark, pose: &Pose, cam: &CameraModel) -> Option<f64> {
    let (dx, dy) = (l.x - pose.x, l.y - pose.y);
    let (s, c) = pose.theta.sin_cos();
    let forward = c * dx + s * dy;
    let left = -s * dx + c * dy;
    if forward < cam.min_depth || cam.max_depth.is_some_and(|m| forward > m) {
        return None;
    }
    let u = -cam.focal_length * left / forward;
    (u.abs() <= cam.half_width).then_some(u)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
