//! Segment controllers: map the current match set against the destination
//! keyframe to a motion command.

pub mod sloped;
pub mod standard;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::MotionCommand;
use crate::visual_path::MatchSet;

pub use sloped::{RadiusPolicy, SlopedController, SlopedParams, SlopedState};
pub use standard::{StandardParams, SteerDecision, Votes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Left,
    Right,
}

impl Direction {
    pub fn mirrored(self) -> Self {
        match self {
            Direction::Forward => Direction::Forward,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// Sign applied to the rotational speed: CCW (left) is positive.
    pub fn omega_sign(self) -> f64 {
        match self {
            Direction::Forward => 0.0,
            Direction::Left => 1.0,
            Direction::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Standard,
    Sloped,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 2] = [ControllerKind::Standard, ControllerKind::Sloped];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Standard => "standard",
            ControllerKind::Sloped => "sloped",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standard" => Ok(ControllerKind::Standard),
            "sloped" => Ok(ControllerKind::Sloped),
            other => Err(format!(
                "unknown controller `{other}` (expected standard or sloped)"
            )),
        }
    }
}

/// Everything a controller reports for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: MotionCommand,
    pub direction: Direction,
    pub votes: Option<Votes>,
    pub sloped: Option<SlopedState>,
}

/// A configured controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Standard(StandardParams),
    Sloped(SlopedController),
}

impl Controller {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Standard(_) => ControllerKind::Standard,
            Controller::Sloped(_) => ControllerKind::Sloped,
        }
    }

    pub fn control(&self, m: &MatchSet) -> Result<ControlOutput> {
        match self {
            Controller::Standard(params) => {
                let decision = standard::decide(m)?;
                Ok(ControlOutput {
                    command: params.command_for(decision.direction),
                    direction: decision.direction,
                    votes: Some(decision.votes),
                    sloped: None,
                })
            }
            Controller::Sloped(ctrl) => {
                let (command, direction, state) = ctrl.decide(m)?;
                Ok(ControlOutput {
                    command,
                    direction,
                    votes: None,
                    sloped: Some(state),
                })
            }
        }
    }

    /// True when every matched feature satisfies the controller's lane constraints.
    pub fn claims_inside(&self, m: &MatchSet) -> Result<bool> {
        match self {
            Controller::Standard(_) => {
                let decision = standard::decide(m)?;
                Ok(decision.votes.forward == m.len())
            }
            Controller::Sloped(ctrl) => Ok(ctrl.evaluate(m)?.inside()),
        }
    }
}
