//! Baseline funnel lane controller.
//!
//! Each matched feature votes on its own pair of funnel constraints and the
//! robot follows the majority at a preset translational and rotational
//! speed, so every turn has the same radius.

use serde::{Deserialize, Serialize};

use super::Direction;
use crate::error::{NavError, Result};
use crate::geometry::MotionCommand;
use crate::visual_path::MatchSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardParams {
    pub v0: f64,
    pub omega0: f64,
}

impl Default for StandardParams {
    fn default() -> Self {
        Self {
            v0: 0.3,
            omega0: 0.3,
        }
    }
}

impl StandardParams {
    pub fn validate(&self) -> Result<()> {
        if self.v0 > 0.0 && self.omega0 > 0.0 && self.v0.is_finite() && self.omega0.is_finite() {
            Ok(())
        } else {
            Err(NavError::InvalidConfig(format!(
                "standard controller needs v0 > 0 and omega0 > 0: {self:?}"
            )))
        }
    }

    pub fn command_for(&self, direction: Direction) -> MotionCommand {
        MotionCommand::new(self.v0, direction.omega_sign() * self.omega0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Votes {
    pub forward: usize,
    pub left: usize,
    pub right: usize,
}

impl Votes {
    /// Plurality winner; ties go to forward, then left.
    pub fn winner(&self) -> Direction {
        if self.forward >= self.left && self.forward >= self.right {
            Direction::Forward
        } else if self.left >= self.right {
            Direction::Left
        } else {
            Direction::Right
        }
    }

    fn add(&mut self, d: Direction) {
        match d {
            Direction::Forward => self.forward += 1,
            Direction::Left => self.left += 1,
            Direction::Right => self.right += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteerDecision {
    pub direction: Direction,
    pub votes: Votes,
}

/// Zero carries no side and agrees with either sign.
fn same_side(a: f64, b: f64) -> bool {
    a == 0.0 || b == 0.0 || (a > 0.0) == (b > 0.0)
}

/// Vote of one feature with current coordinate `u_c` and destination `u_j`.
///
/// For a right-side destination feature, drifting past the destination
/// column asks for a right turn and crossing to the other half of the image
/// asks for a left turn; left-side features mirror this. A feature on the
/// wrong side is reported as a side violation even when it is also far out.
pub fn feature_vote(u_c: f64, u_j: f64) -> Direction {
    let toward_outside = if u_j >= 0.0 {
        Direction::Right
    } else {
        Direction::Left
    };
    if !same_side(u_c, u_j) {
        toward_outside.mirrored()
    } else if u_c.abs() >= u_j.abs() {
        toward_outside
    } else {
        Direction::Forward
    }
}

pub fn decide(m: &MatchSet) -> Result<SteerDecision> {
    if m.is_empty() {
        return Err(NavError::EmptyMatch);
    }
    let mut votes = Votes::default();
    for p in m.pairs() {
        votes.add(feature_vote(p.current, p.destination));
    }
    Ok(SteerDecision {
        direction: votes.winner(),
        votes,
    })
}

pub fn standard_command(m: &MatchSet, p: &StandardParams) -> Result<MotionCommand> {
    Ok(p.command_for(decide(m)?.direction))
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: StandardParams = StandardParams {
        v0: 0.4,
        omega0: 0.2,
    };

    #[test]
    fn single_feature_votes() {
        assert_eq!(feature_vote(5.0, 10.0), Direction::Forward);
        assert_eq!(feature_vote(12.0, 10.0), Direction::Right);
        assert_eq!(feature_vote(-2.0, 10.0), Direction::Left);
        // left-side destination feature: reversed
        assert_eq!(feature_vote(-5.0, -10.0), Direction::Forward);
        assert_eq!(feature_vote(-12.0, -10.0), Direction::Left);
        assert_eq!(feature_vote(2.0, -10.0), Direction::Right);
    }

    #[test]
    fn boundary_and_zero_conventions() {
        // equal magnitude violates the strict constraint
        assert_eq!(feature_vote(10.0, 10.0), Direction::Right);
        // zero matches either sign
        assert_eq!(feature_vote(0.0, 10.0), Direction::Forward);
        assert_eq!(feature_vote(0.0, -10.0), Direction::Forward);
        // far on the wrong side is a side violation
        assert_eq!(feature_vote(-12.0, 10.0), Direction::Left);
    }

    #[test]
    fn all_forward_drives_straight() {
        let m = MatchSet::from_coords(&[(5.0, 10.0), (-3.0, -30.0), (40.0, 60.0)]);
        assert_eq!(
            standard_command(&m, &P).unwrap(),
            MotionCommand::new(0.4, 0.0)
        );
    }

    #[test]
    fn majority_right() {
        let m = MatchSet::from_coords(&[
            (12.0, 10.0),
            (25.0, 20.0),
            (31.0, 30.0),
            (-2.0, 10.0),
            (5.0, 10.0),
        ]);
        let d = decide(&m).unwrap();
        assert_eq!(
            d.votes,
            Votes {
                forward: 1,
                left: 1,
                right: 3
            }
        );
        assert_eq!(
            standard_command(&m, &P).unwrap(),
            MotionCommand::new(0.4, -0.2)
        );
    }

    #[test]
    fn ties_prefer_forward_then_left() {
        let fwd_left = MatchSet::from_coords(&[(5.0, 10.0), (-2.0, 10.0)]);
        assert_eq!(decide(&fwd_left).unwrap().direction, Direction::Forward);
        let left_right = MatchSet::from_coords(&[(12.0, 10.0), (-2.0, 10.0)]);
        assert_eq!(decide(&left_right).unwrap().direction, Direction::Left);
    }

    #[test]
    fn ambiguous_right_side_configurations_both_forward() {
        // rotation-like shift and translation-like shrink, both inside the lane
        let rotated = MatchSet::from_coords(&[(20.0, 48.0), (50.0, 78.0), (80.0, 109.0)]);
        let translated = MatchSet::from_coords(&[(24.0, 48.0), (39.0, 78.0), (55.0, 109.0)]);
        assert_eq!(
            standard_command(&rotated, &P).unwrap(),
            MotionCommand::new(0.4, 0.0)
        );
        assert_eq!(
            standard_command(&translated, &P).unwrap(),
            MotionCommand::new(0.4, 0.0)
        );
    }

    #[test]
    fn empty_match_is_an_error() {
        assert_eq!(decide(&MatchSet::default()), Err(NavError::EmptyMatch));
    }
}
