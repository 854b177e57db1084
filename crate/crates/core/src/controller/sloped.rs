//! Sloped funnel lane controller.
//!
//! All matched features together form one lane. The destination image is
//! split into left and right halves and each half is represented by the
//! median of its features. Four constraints on those medians decide whether
//! the robot is inside the lane. Two slopes then shape the command:
//!
//! * the pitch `S_y = 1 - σ(current) / σ(destination)` is large far from the
//!   destination and shrinks to zero on arrival; it sets the turn radius,
//! * the roll `S_x` sums the relative median offsets of both halves; its
//!   sign picks the turn direction while inside the lane.

use serde::{Deserialize, Serialize};

use super::Direction;
use crate::error::{NavError, Result};
use crate::geometry::MotionCommand;
use crate::visual_path::{median, MatchSet};

/// Maps the pitch slope to a speed pair. Turning always uses the full
/// rotational speed, so the radius scales with the translational speed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusPolicy {
    /// `v = v_max * clamp(S_y, 0, 1)`.
    #[default]
    Linear,
    /// `v = v_max * clamp(S_y, 0, 1)^2`; turns tighter for the same slope.
    Quadratic,
}

impl RadiusPolicy {
    /// Returns `(v, |omega|)` for a turn at pitch `s_y`.
    pub fn speeds(self, s_y: f64, p: &SlopedParams) -> (f64, f64) {
        let s = s_y.clamp(0.0, 1.0);
        let scale = match self {
            RadiusPolicy::Linear => s,
            RadiusPolicy::Quadratic => s * s,
        };
        (p.v_max * scale, p.omega_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlopedParams {
    pub v_max: f64,
    pub omega_max: f64,
    /// Half-width of the roll dead-band treated as zero roll.
    pub sx_epsilon: f64,
    /// Floor for the destination median magnitude in the roll normalization, pixels.
    pub norm_floor: f64,
    pub policy: RadiusPolicy,
}

impl Default for SlopedParams {
    fn default() -> Self {
        Self {
            v_max: 0.3,
            omega_max: 0.2,
            sx_epsilon: 0.05,
            norm_floor: 5.0,
            policy: RadiusPolicy::Linear,
        }
    }
}

impl SlopedParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.v_max) && ok(self.omega_max) && ok(self.sx_epsilon) && ok(self.norm_floor) {
            Ok(())
        } else {
            Err(NavError::InvalidConfig(format!(
                "sloped controller parameters must be positive: {self:?}"
            )))
        }
    }

    pub fn max_radius(&self) -> f64 {
        self.v_max / self.omega_max
    }
}

/// Median coordinate of one image half, in the current and destination images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideMedians {
    pub current: f64,
    pub destination: f64,
}

impl SideMedians {
    fn of(side: &MatchSet) -> Option<Self> {
        Some(Self {
            current: median(&side.current())?,
            destination: median(&side.destination())?,
        })
    }

    fn within(&self) -> bool {
        self.current.abs() < self.destination.abs()
    }

    fn same_side(&self) -> bool {
        let (c, d) = (self.current, self.destination);
        c == 0.0 || d == 0.0 || (c > 0.0) == (d > 0.0)
    }

    fn roll_term(&self, floor: f64) -> f64 {
        (self.current - self.destination) / self.destination.abs().max(floor)
    }
}

/// Per-tick lane evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopedState {
    pub s_x: f64,
    /// `None` when the destination spread is degenerate.
    pub s_y: Option<f64>,
    pub left: Option<SideMedians>,
    pub right: Option<SideMedians>,
    /// In order: right magnitude, left magnitude, right sign, left sign.
    /// A missing half satisfies its two constraints.
    pub constraints: [bool; 4],
}

impl SlopedState {
    pub fn inside(&self) -> bool {
        self.constraints.iter().all(|&c| c)
    }

    /// Turn direction asked for by the violated constraints, if any.
    ///
    /// A magnitude violation on a half whose sign constraint also fails is
    /// attributed to the sign violation.
    pub fn recovery_direction(&self) -> Option<Direction> {
        let [right_within, left_within, right_side, left_side] = self.constraints;
        let turn_right = !left_side || (!right_within && right_side);
        let turn_left = !right_side || (!left_within && left_side);
        if turn_right {
            Some(Direction::Right)
        } else if turn_left {
            Some(Direction::Left)
        } else {
            None
        }
    }
}

/// Pitch slope: `1 - σ(current) / σ(destination)`.
pub fn compute_s_y(m: &MatchSet) -> Result<f64> {
    Ok(1.0 - m.std_ratio()?)
}

/// Roll slope: sum over image halves of `(μ_c - μ_j) / max(|μ_j|, norm_floor)`.
pub fn compute_s_x(m: &MatchSet, p: &SlopedParams) -> Result<f64> {
    if m.is_empty() {
        return Err(NavError::EmptyMatch);
    }
    let (left, right) = m.split_sides();
    Ok([SideMedians::of(&left), SideMedians::of(&right)]
        .iter()
        .flatten()
        .map(|s| s.roll_term(p.norm_floor))
        .sum())
}

/// Speeds for a turn under the linear policy.
pub fn radius_policy(s_y: f64, p: &SlopedParams) -> (f64, f64) {
    RadiusPolicy::Linear.speeds(s_y, p)
}

pub fn evaluate(m: &MatchSet, p: &SlopedParams) -> Result<SlopedState> {
    if m.is_empty() {
        return Err(NavError::EmptyMatch);
    }
    let (left_set, right_set) = m.split_sides();
    let left = SideMedians::of(&left_set);
    let right = SideMedians::of(&right_set);
    let holds =
        |side: &Option<SideMedians>, f: fn(&SideMedians) -> bool| side.as_ref().is_none_or(f);
    let constraints = [
        holds(&right, SideMedians::within),
        holds(&left, SideMedians::within),
        holds(&right, SideMedians::same_side),
        holds(&left, SideMedians::same_side),
    ];
    let s_x = [left, right]
        .iter()
        .flatten()
        .map(|s| s.roll_term(p.norm_floor))
        .sum();
    Ok(SlopedState {
        s_x,
        s_y: compute_s_y(m).ok(),
        left,
        right,
        constraints,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlopedController {
    pub params: SlopedParams,
}

impl SlopedController {
    pub fn new(params: SlopedParams) -> Self {
        Self { params }
    }

    pub fn evaluate(&self, m: &MatchSet) -> Result<SlopedState> {
        evaluate(m, &self.params)
    }

    pub fn decide(&self, m: &MatchSet) -> Result<(MotionCommand, Direction, SlopedState)> {
        let p = &self.params;
        let state = self.evaluate(m)?;
        let direction = if state.inside() {
            // without a pitch the turn radius is unknown: keep driving
            if state.s_y.is_none() || state.s_x.abs() <= p.sx_epsilon {
                Direction::Forward
            } else if state.s_x < 0.0 {
                Direction::Left
            } else {
                Direction::Right
            }
        } else {
            state
                .recovery_direction()
                .expect("a violated constraint always names a direction")
        };
        let command = match direction {
            Direction::Forward => MotionCommand::new(p.v_max, 0.0),
            turn => {
                // outside the lane without a pitch: rotate in place
                let (v, omega) = state
                    .s_y
                    .map_or((0.0, p.omega_max), |s_y| p.policy.speeds(s_y, p));
                MotionCommand::new(v, turn.omega_sign() * omega)
            }
        };
        Ok((command, direction, state))
    }

    pub fn command(&self, m: &MatchSet) -> Result<MotionCommand> {
        self.decide(m).map(|(c, _, _)| c)
    }
}

pub fn sloped_command(m: &MatchSet, p: &SlopedParams) -> Result<MotionCommand> {
    SlopedController::new(*p).command(m)
}
