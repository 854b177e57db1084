//! Visual path recording from a scripted teach drive.
//!
//! Features of a keyframe are tracked through the following frames. Once
//! fewer than half of them are still tracked, the frame before the one that
//! crossed the threshold becomes the next keyframe and tracking restarts
//! from it. The last frame always closes the path.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geometry::{self, CameraModel, LandmarkId, MotionCommand, Observations, Pose, World};
use crate::visual_path::{Keyframe, SegmentFeature, VisualPath};

pub const DEFAULT_MIN_FEATURES: usize = 4;

/// Fewest landmarks any teach frame may see.
const MIN_FRAME_FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachLeg {
    pub v: f64,
    pub omega: f64,
    /// Seconds; the leg lasts `round(duration / dt)` frames.
    pub duration: f64,
}

impl TeachLeg {
    pub fn command(&self) -> MotionCommand {
        MotionCommand::new(self.v, self.omega)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachScript {
    pub start: Pose,
    pub dt: f64,
    pub legs: Vec<TeachLeg>,
    #[serde(default = "default_min_features")]
    pub min_features: usize,
}

fn default_min_features() -> usize {
    DEFAULT_MIN_FEATURES
}

impl TeachScript {
    pub fn new(start: Pose, dt: f64, legs: Vec<TeachLeg>) -> Self {
        Self {
            start,
            dt,
            legs,
            min_features: DEFAULT_MIN_FEATURES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(NavError::InvalidConfig(format!(
                "teach dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.legs.is_empty() {
            return Err(NavError::InvalidConfig("teach script has no legs".into()));
        }
        for (i, leg) in self.legs.iter().enumerate() {
            if !(leg.duration.is_finite() && leg.duration > 0.0) {
                return Err(NavError::InvalidConfig(format!(
                    "teach leg {i} duration must be > 0, got {}",
                    leg.duration
                )));
            }
            if !(leg.v.is_finite() && leg.v >= 0.0 && leg.omega.is_finite()) {
                return Err(NavError::InvalidConfig(format!(
                    "teach leg {i} needs v >= 0 and a finite omega"
                )));
            }
        }
        Ok(())
    }

    /// Poses of every frame, starting with the start pose.
    pub fn frame_poses(&self) -> Vec<Pose> {
        let mut poses = vec![self.start];
        let mut pose = self.start;
        for leg in &self.legs {
            let steps = ((leg.duration / self.dt).round() as usize).max(1);
            let cmd = leg.command();
            for _ in 0..steps {
                pose = geometry::step(&pose, &cmd, self.dt);
                poses.push(pose);
            }
        }
        poses
    }
}

/// Keyframe choice over a sequence of frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyframeSelection {
    /// Frame indices of the keyframes, strictly increasing.
    pub frames: Vec<usize>,
    /// Ids tracked through each segment, one entry per consecutive keyframe pair.
    pub tracked: Vec<BTreeSet<LandmarkId>>,
}

/// Applies the tracked-fraction rule to per-frame visible id sets.
pub fn select_keyframes(frames: &[BTreeSet<LandmarkId>]) -> KeyframeSelection {
    let mut selection = KeyframeSelection {
        frames: vec![0],
        tracked: Vec::new(),
    };
    if frames.is_empty() {
        return selection;
    }
    let mut anchor = 0;
    let mut initial = frames[0].len();
    let mut tracked = frames[0].clone();
    let mut k = 1;
    while k < frames.len() {
        let still: BTreeSet<_> = tracked.intersection(&frames[k]).copied().collect();
        if 2 * still.len() < initial {
            if k - 1 == anchor {
                // threshold crossed right after a keyframe: keep the crossing frame
                selection.frames.push(k);
                selection.tracked.push(still);
                anchor = k;
                k += 1;
            } else {
                selection.frames.push(k - 1);
                selection.tracked.push(std::mem::take(&mut tracked));
                anchor = k - 1;
            }
            tracked = frames[anchor].clone();
            initial = tracked.len();
            continue;
        }
        tracked = still;
        k += 1;
    }
    let last = frames.len() - 1;
    if anchor != last {
        selection.frames.push(last);
        selection.tracked.push(tracked);
    }
    selection
}

/// A recorded teach drive: the visual path plus every frame pose.
#[derive(Debug, Clone, PartialEq)]
pub struct TeachRecording {
    pub path: VisualPath,
    pub trajectory: Vec<Pose>,
}

pub fn record(world: &World, cam: &CameraModel, script: &TeachScript) -> Result<VisualPath> {
    record_with_trajectory(world, cam, script).map(|r| r.path)
}

pub fn record_with_trajectory(
    world: &World,
    cam: &CameraModel,
    script: &TeachScript,
) -> Result<TeachRecording> {
    script.validate()?;
    cam.validate()?;
    let poses = script.frame_poses();
    let observations: Vec<Observations> = poses
        .iter()
        .map(|p| geometry::visible_set(world, p, cam))
        .collect();

    let required = script.min_features.max(MIN_FRAME_FEATURES);
    if observations[0].len() < required {
        return Err(NavError::TeachDegenerate {
            frame: 0,
            visible: observations[0].len(),
            required,
        });
    }
    if let Some((frame, obs)) = observations
        .iter()
        .enumerate()
        .find(|(_, o)| o.len() < MIN_FRAME_FEATURES)
    {
        return Err(NavError::TeachDegenerate {
            frame,
            visible: obs.len(),
            required: MIN_FRAME_FEATURES,
        });
    }

    let id_sets: Vec<BTreeSet<LandmarkId>> = observations
        .iter()
        .map(|o| o.keys().copied().collect())
        .collect();
    let selection = select_keyframes(&id_sets);

    let keyframes = selection
        .frames
        .iter()
        .enumerate()
        .map(|(index, &frame)| Keyframe {
            index,
            pose_truth: poses[frame],
            observations: observations[frame].clone(),
        })
        .collect();
    let segments = selection
        .frames
        .windows(2)
        .zip(&selection.tracked)
        .map(|(pair, ids)| {
            ids.iter()
                .map(|&id| SegmentFeature {
                    id,
                    start: observations[pair[0]][&id],
                    end: observations[pair[1]][&id],
                })
                .collect()
        })
        .collect();
    let path = VisualPath::new(keyframes, segments)?;
    Ok(TeachRecording {
        path,
        trajectory: poses,
    })
}
