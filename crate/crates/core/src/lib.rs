//! Teach-and-repeat visual navigation over a simulated landmark world.
//!
//! A robot drives a scripted path once while keyframes are extracted from
//! its monocular view ([`teach`]). It then repeats the path from the
//! keyframes alone ([`navigator`]) with one of two qualitative controllers:
//! the per-feature funnel lane ([`controller::standard`]) or the sloped
//! funnel lane ([`controller::sloped`]), which adapts its turn radius.
//! [`evaluation`] runs scenario batches and scores them.

pub mod controller;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod navigator;
pub mod output;
pub mod scenario;
pub mod teach;
pub mod visual_path;

pub use controller::{Controller, ControllerKind, Direction};
pub use error::{LoadError, NavError, Result};
pub use geometry::{CameraModel, Landmark, MotionCommand, Observations, Pose, Rect, World};
pub use navigator::{navigate, NavigatorConfig, Outcome, RunTrace};
pub use scenario::Scenario;
pub use visual_path::{Keyframe, MatchSet, NoiseModel, VisualPath};
