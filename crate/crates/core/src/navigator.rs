//! Repeat phase: follow a visual path segment by segment.
//!
//! Each tick the robot senses, follows its matched features into the new
//! frame and checks the switching condition against the segment's
//! destination keyframe. On a switch the next segment is matched afresh.
//! When too few features remain the robot stops and re-matches every tick
//! until it recovers or gives up.

use serde::{Deserialize, Serialize};

use crate::controller::{ControlOutput, Controller, ControllerKind, Direction, SlopedState};
use crate::error::{NavError, Result};
use crate::geometry::{self, CameraModel, MotionCommand, Pose, World};
use crate::visual_path::{MatchSet, Matcher, NoiseModel, VisualPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavigatorConfig {
    /// Switch when the median distance to the destination drops below this, pixels.
    pub threshold1_ed: f64,
    /// Fewest matched features the controller may act on.
    pub threshold2_features: usize,
    /// Stopped ticks before the run is declared lost.
    pub threshold3_time: usize,
    pub dt: f64,
    pub max_ticks: usize,
    /// Radius of the robot footprint used for collision reports, meters.
    pub robot_radius: f64,
}

impl Default for NavigatorConfig {
    fn default() -> Self {
        Self {
            threshold1_ed: 10.0,
            threshold2_features: 4,
            threshold3_time: 50,
            dt: 0.1,
            max_ticks: 5000,
            robot_radius: 0.0,
        }
    }
}

impl NavigatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NavError::InvalidConfig(format!("navigator: {msg}")));
        if !(self.threshold1_ed.is_finite() && self.threshold1_ed > 0.0) {
            return bad("threshold1_ed must be > 0");
        }
        if self.threshold2_features < 2 {
            return bad("threshold2_features must be >= 2");
        }
        if self.threshold3_time == 0 || self.max_ticks == 0 {
            return bad("threshold3_time and max_ticks must be > 0");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if !(self.robot_radius.is_finite() && self.robot_radius >= 0.0) {
            return bad("robot_radius must be >= 0");
        }
        Ok(())
    }
}

/// Keyframe switching test.
///
/// Switches once the current spread exceeds the destination spread and the
/// medians are within `threshold1_ed`. Without a usable spread ratio the
/// median test alone decides, at half the threshold.
pub fn should_switch(m: &MatchSet, cfg: &NavigatorConfig) -> bool {
    let Ok(ed) = m.median_distance() else {
        return false;
    };
    match m.std_ratio() {
        Ok(ratio) => ratio > 1.0 && ed < cfg.threshold1_ed,
        Err(_) => ed < 0.5 * cfg.threshold1_ed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Switch,
    /// Too few features: the robot is stopped this tick.
    Stopped,
    Recovered,
    Done,
    Lost,
    Timeout,
    Collision,
}

impl Event {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Event::Done | Event::Lost | Event::Timeout | Event::Collision
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Done,
    Lost,
    Timeout,
    Collision,
}

impl Outcome {
    pub fn event(self) -> Event {
        match self {
            Outcome::Done => Event::Done,
            Outcome::Lost => Event::Lost,
            Outcome::Timeout => Event::Timeout,
            Outcome::Collision => Event::Collision,
        }
    }
}

/// One tick of a repeat run. The pose is the pose at the start of the tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub segment: usize,
    pub v: f64,
    pub omega: f64,
    pub direction: Option<Direction>,
    pub nmf: usize,
    pub std_ratio: Option<f64>,
    pub ed: Option<f64>,
    pub mse: Option<f64>,
    pub sloped: Option<SlopedState>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub controller: ControllerKind,
    pub seed: u64,
    pub outcome: Outcome,
    pub ticks: usize,
    pub start_pose: Pose,
    pub final_pose: Pose,
    /// Segments whose destination was reached.
    pub segments_completed: usize,
    pub segment_count: usize,
    pub stopped_ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub ticks: Vec<TickRecord>,
    pub summary: RunSummary,
}

impl RunTrace {
    pub fn outcome(&self) -> Outcome {
        self.summary.outcome
    }

    pub fn final_pose(&self) -> Pose {
        self.summary.final_pose
    }

    /// Line-delimited records: one per tick, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.ticks {
            out.push_str(&serde_json::to_string(&TraceLine::Tick(t)).expect("tick serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&TraceLine::Summary(&self.summary)).expect("summary serializes"),
        );
        out.push('\n');
        out
    }
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine<'a> {
    Tick(&'a TickRecord),
    Summary(&'a RunSummary),
}

/// Runs the repeat phase from `start` until done, lost, collision or timeout.
pub fn navigate(
    world: &World,
    cam: &CameraModel,
    path: &VisualPath,
    start: Pose,
    cfg: &NavigatorConfig,
    controller: &Controller,
    noise: &NoiseModel,
) -> Result<RunTrace> {
    cfg.validate()?;
    cam.validate()?;
    noise.validate()?;
    path.check_camera(cam)?;

    let segment_count = path.segment_count();
    let mut matcher = Matcher::new(*noise);
    let mut segment = 0;
    let mut destination = path.destination(segment);

    let visible_at_start = geometry::visible_set(world, &start, cam);
    let localized = MatchSet::exact(&visible_at_start, &destination).len();
    if localized < cfg.threshold2_features {
        return Err(NavError::InvalidPath(format!(
            "start pose sees {localized} of the first segment's features, need {}",
            cfg.threshold2_features
        )));
    }

    let mut pose = start;
    let mut tracked = matcher.match_features(&visible_at_start, &destination);
    let mut fresh = true;
    let mut recovering = false;
    let mut stopped = 0;
    let mut stopped_total = 0;
    let mut ticks = Vec::new();
    let mut outcome = None;

    for tick in 0..cfg.max_ticks {
        let observed = geometry::visible_set(world, &pose, cam);
        let mut events = Vec::new();
        let mut matches = if fresh {
            fresh = false;
            std::mem::take(&mut tracked)
        } else if recovering {
            matcher.match_features(&observed, &destination)
        } else {
            matcher.track(&tracked, &observed)
        };

        if should_switch(&matches, cfg) {
            if segment + 1 == segment_count {
                events.push(Event::Done);
                ticks.push(record(
                    tick,
                    &pose,
                    segment,
                    &matches,
                    None,
                    MotionCommand::STOP,
                    events,
                ));
                outcome = Some(Outcome::Done);
                segment += 1;
                break;
            }
            segment += 1;
            destination = path.destination(segment);
            events.push(Event::Switch);
            matches = matcher.match_features(&observed, &destination);
        }

        let (command, output) = if matches.len() >= cfg.threshold2_features {
            if recovering {
                events.push(Event::Recovered);
                recovering = false;
                stopped = 0;
            }
            let output = controller.control(&matches)?;
            (output.command, Some(output))
        } else {
            recovering = true;
            stopped += 1;
            stopped_total += 1;
            events.push(Event::Stopped);
            (MotionCommand::STOP, None)
        };

        let give_up = recovering && stopped >= cfg.threshold3_time;
        if give_up {
            events.push(Event::Lost);
        }
        let next = geometry::step(&pose, &command, cfg.dt);
        let collided = !give_up && world.collides(next.x, next.y, cfg.robot_radius);
        if collided {
            events.push(Event::Collision);
        }
        ticks.push(record(
            tick,
            &pose,
            segment,
            &matches,
            output.as_ref(),
            command,
            events,
        ));
        if give_up {
            outcome = Some(Outcome::Lost);
            break;
        }
        pose = next;
        if collided {
            outcome = Some(Outcome::Collision);
            break;
        }
        tracked = matches;
    }

    let outcome = outcome.unwrap_or_else(|| {
        if let Some(last) = ticks.last_mut() {
            last.events.push(Event::Timeout);
        }
        Outcome::Timeout
    });
    let summary = RunSummary {
        controller: controller.kind(),
        seed: noise.seed,
        outcome,
        ticks: ticks.len(),
        start_pose: start,
        final_pose: pose,
        segments_completed: segment,
        segment_count,
        stopped_ticks: stopped_total,
    };
    Ok(RunTrace { ticks, summary })
}

fn record(
    tick: usize,
    pose: &Pose,
    segment: usize,
    m: &MatchSet,
    output: Option<&ControlOutput>,
    command: MotionCommand,
    events: Vec<Event>,
) -> TickRecord {
    TickRecord {
        tick,
        x: pose.x,
        y: pose.y,
        theta: pose.theta,
        segment,
        v: command.v,
        omega: command.omega,
        direction: output.map(|o| o.direction),
        nmf: m.len(),
        std_ratio: m.std_ratio().ok(),
        ed: m.median_distance().ok(),
        mse: m.mse().ok(),
        sloped: output.and_then(|o| o.sloped),
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NavigatorConfig {
        NavigatorConfig {
            threshold1_ed: 5.0,
            ..NavigatorConfig::default()
        }
    }

    #[test]
    fn switch_examples() {
        // ratio 1.05, medians 3 px apart
        let yes = MatchSet::from_coords(&[(-21.0 + 3.0, -20.0), (21.0 + 3.0, 20.0)]);
        assert!((yes.std_ratio().unwrap() - 1.05).abs() < 1e-12);
        assert!(should_switch(&yes, &cfg()));
        let not_yet = MatchSet::from_coords(&[(-18.0 + 1.0, -20.0), (18.0 + 1.0, 20.0)]);
        assert!(!should_switch(&not_yet, &cfg()));
        let far = MatchSet::from_coords(&[(-30.0 + 9.0, -20.0), (30.0 + 9.0, 20.0)]);
        assert!(!should_switch(&far, &cfg()));
        assert!(!should_switch(&MatchSet::default(), &cfg()));
    }

    #[test]
    fn switch_falls_back_to_half_threshold() {
        let near = MatchSet::from_coords(&[(12.0, 10.0)]);
        assert!(should_switch(&near, &cfg()));
        let mid = MatchSet::from_coords(&[(13.0, 10.0)]);
        assert!(!should_switch(&mid, &cfg()));
    }

    #[test]
    fn config_validation() {
        assert!(NavigatorConfig::default().validate().is_ok());
        let bad = NavigatorConfig {
            threshold2_features: 1,
            ..NavigatorConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
