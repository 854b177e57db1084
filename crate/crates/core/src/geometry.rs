//! Planar world, 1D pinhole projection and unicycle kinematics.
//!
//! Image coordinates are horizontal pixel offsets from the principal point.
//! A positive coordinate means the landmark appears on the right half of
//! the image.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

pub type LandmarkId = u32;

/// Landmark id to horizontal image coordinate (pixels).
pub type Observations = BTreeMap<LandmarkId, f64>;

/// Below this rotational speed a command is integrated as a straight line.
const STRAIGHT_OMEGA: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseFields")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading, CCW-positive, zero along world +x.
    pub theta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFields {
    x: f64,
    y: f64,
    theta: f64,
}

impl From<PoseFields> for Pose {
    fn from(p: PoseFields) -> Self {
        Pose::new(p.x, p.y, p.theta)
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Expresses a world point in this pose's frame as `(forward, left)`.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        let dx = x - self.x;
        let dy = y - self.y;
        (dx * cos + dy * sin, -dx * sin + dy * cos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: LandmarkId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal_length: f64,
    /// The image spans `[-half_width, +half_width]` pixels.
    pub half_width: f64,
    /// Landmarks closer than this along the optical axis are not imaged.
    pub min_depth: f64,
    /// Landmarks farther than this along the optical axis are not detected.
    #[serde(default)]
    pub max_depth: Option<f64>,
}

impl Default for CameraModel {
    /// 320 px wide image with roughly a 60 degree horizontal field of view.
    fn default() -> Self {
        Self {
            focal_length: 277.0,
            half_width: 160.0,
            min_depth: 0.1,
            max_depth: None,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let far_ok = self.max_depth.is_none_or(|d| ok(d) && d > self.min_depth);
        if ok(self.focal_length) && ok(self.half_width) && ok(self.min_depth) && far_ok {
            Ok(())
        } else {
            Err(NavError::InvalidConfig(format!(
                "camera parameters must be finite and positive: {self:?}"
            )))
        }
    }

    /// Half of the horizontal field of view, radians.
    pub fn half_fov(&self) -> f64 {
        (self.half_width / self.focal_length).atan()
    }
}

/// Axis-aligned rectangle in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    /// Euclidean distance from a point to the rectangle; zero inside.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min[0] - x).max(0.0).max(x - self.max[0]);
        let dy = (self.min[1] - y).max(0.0).max(y - self.max[1]);
        dx.hypot(dy)
    }

    fn is_valid(&self) -> bool {
        self.min
            .iter()
            .chain(self.max.iter())
            .all(|v| v.is_finite())
            && self.min[0] <= self.max[0]
            && self.min[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    landmarks: Vec<Landmark>,
    bounds: Rect,
    obstacles: Vec<Rect>,
}

impl World {
    /// Landmarks are stored sorted by id.
    pub fn new(mut landmarks: Vec<Landmark>, bounds: Rect, obstacles: Vec<Rect>) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(NavError::InvalidWorld(format!("bad bounds {bounds:?}")));
        }
        if let Some(rect) = obstacles.iter().find(|r| !r.is_valid()) {
            return Err(NavError::InvalidWorld(format!("bad obstacle {rect:?}")));
        }
        landmarks.sort_by_key(|l| l.id);
        if let Some(pair) = landmarks.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(NavError::InvalidWorld(format!(
                "duplicate landmark id {}",
                pair[0].id
            )));
        }
        if let Some(l) = landmarks.iter().find(|l| !bounds.contains(l.x, l.y)) {
            return Err(NavError::InvalidWorld(format!(
                "landmark {} at ({}, {}) lies outside the bounds",
                l.id, l.x, l.y
            )));
        }
        Ok(Self {
            landmarks,
            bounds,
            obstacles,
        })
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn landmark(&self, id: LandmarkId) -> Option<&Landmark> {
        self.landmarks
            .binary_search_by_key(&id, |l| l.id)
            .ok()
            .map(|i| &self.landmarks[i])
    }

    /// Copy of this world without the given landmarks.
    pub fn without_landmarks(&self, removed: &BTreeSet<LandmarkId>) -> World {
        World {
            landmarks: self
                .landmarks
                .iter()
                .filter(|l| !removed.contains(&l.id))
                .copied()
                .collect(),
            bounds: self.bounds,
            obstacles: self.obstacles.clone(),
        }
    }

    /// True when a disc of `radius` at `(x, y)` touches an obstacle or leaves the bounds.
    pub fn collides(&self, x: f64, y: f64, radius: f64) -> bool {
        let b = &self.bounds;
        let inside = x - radius >= b.min[0]
            && x + radius <= b.max[0]
            && y - radius >= b.min[1]
            && y + radius <= b.max[1];
        !inside || self.obstacles.iter().any(|o| o.distance(x, y) <= radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionCommand {
    /// Translational speed, m/s, never negative.
    pub v: f64,
    /// Rotational speed, rad/s, CCW-positive.
    pub omega: f64,
}

impl MotionCommand {
    pub const STOP: MotionCommand = MotionCommand { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    /// Turning radius `v / omega`; `None` when driving straight.
    pub fn turn_radius(&self) -> Option<f64> {
        if self.omega.abs() < STRAIGHT_OMEGA {
            None
        } else {
            Some(self.v / self.omega.abs())
        }
    }
}

/// Horizontal image coordinate of `landmark` seen from `pose`, or `None`
/// when its depth lies outside `[min_depth, max_depth]` or it falls outside
/// the image border.
pub fn project(landmark: &Landmark, pose: &Pose, cam: &CameraModel) -> Option<f64> {
    let (depth, left) = pose.to_local(landmark.x, landmark.y);
    if depth < cam.min_depth || cam.max_depth.is_some_and(|d| depth > d) {
        return None;
    }
    let u = cam.focal_length * (-left) / depth;
    (u.abs() <= cam.half_width).then_some(u)
}

pub fn visible_set(world: &World, pose: &Pose, cam: &CameraModel) -> Observations {
    world
        .landmarks()
        .iter()
        .filter_map(|l| project(l, pose, cam).map(|u| (l.id, u)))
        .collect()
}

/// Exact unicycle integration of a constant command over `dt` seconds.
pub fn step(pose: &Pose, cmd: &MotionCommand, dt: f64) -> Pose {
    debug_assert!(dt > 0.0, "dt must be positive");
    let turn = cmd.omega * dt;
    let (dx, dy) = if cmd.omega.abs() < STRAIGHT_OMEGA {
        let (sin, cos) = pose.theta.sin_cos();
        (cmd.v * dt * cos, cmd.v * dt * sin)
    } else {
        // chord of the arc: length v*dt*sinc(turn/2), direction theta + turn/2
        let half = 0.5 * turn;
        let chord = cmd.v * dt * (half.sin() / half);
        let (sin, cos) = (pose.theta + half).sin_cos();
        (chord * cos, chord * sin)
    };
    Pose::new(pose.x + dx, pose.y + dy, pose.theta + turn)
}
