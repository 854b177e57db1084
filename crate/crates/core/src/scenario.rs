//! Scenario and world configuration files (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    Controller, ControllerKind, SlopedController, SlopedParams, StandardParams,
};
use crate::error::{LoadError, NavError, Result};
use crate::geometry::{CameraModel, Landmark, LandmarkId, Pose, Rect, World};
use crate::navigator::NavigatorConfig;
use crate::teach::TeachScript;
use crate::visual_path::NoiseModel;

/// Evenly spaced landmarks along a line segment, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRow {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub count: usize,
    /// Ids are `first_id..first_id + count`; defaults to the next free id.
    pub first_id: Option<LandmarkId>,
    /// Uniform perturbation of each coordinate in `[-jitter, jitter]`, meters.
    #[serde(default)]
    pub jitter: f64,
}

/// World description shared by inline `[world]` tables and world files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub bounds: Rect,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub rows: Vec<LandmarkRow>,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    /// Seed for row jitter.
    #[serde(default)]
    pub seed: u64,
}

impl WorldSpec {
    pub fn build(&self) -> Result<World> {
        let mut landmarks = self.landmarks.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for row in &self.rows {
            let first = row
                .first_id
                .unwrap_or_else(|| landmarks.iter().map(|l| l.id + 1).max().unwrap_or(0));
            for i in 0..row.count {
                let t = if row.count == 1 {
                    0.0
                } else {
                    i as f64 / (row.count - 1) as f64
                };
                let mut x = row.from[0] + t * (row.to[0] - row.from[0]);
                let mut y = row.from[1] + t * (row.to[1] - row.from[1]);
                if row.jitter > 0.0 {
                    x += rng.random_range(-row.jitter..=row.jitter);
                    y += rng.random_range(-row.jitter..=row.jitter);
                }
                landmarks.push(Landmark {
                    id: first + i as LandmarkId,
                    x,
                    y,
                });
            }
        }
        World::new(landmarks, self.bounds, self.obstacles.clone())
    }

    pub fn load(path: &Path) -> std::result::Result<World, LoadError> {
        let spec: WorldSpec = parse_toml(path)?;
        spec.build().map_err(|source| LoadError::Invalid {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartJitter {
    /// Standard deviation of each position coordinate, meters.
    pub position: f64,
    /// Standard deviation of the heading, radians.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatSpec {
    /// Defaults to the teach start pose.
    pub start: Option<Pose>,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "default_tolerance")]
    pub success_tolerance: f64,
    /// Landmarks removed from the world before the repeat runs.
    #[serde(default)]
    pub remove_landmarks: Vec<LandmarkId>,
    #[serde(default)]
    pub start_jitter: StartJitter,
}

impl Default for RepeatSpec {
    fn default() -> Self {
        Self {
            start: None,
            runs: 1,
            success_tolerance: default_tolerance(),
            remove_landmarks: Vec::new(),
            start_jitter: StartJitter::default(),
        }
    }
}

fn one() -> usize {
    1
}

fn default_tolerance() -> f64 {
    0.3
}

/// Regular grid of poses sharing one heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self) -> (f64, f64) {
        let d = |r: [f64; 2], n: usize| {
            if n > 1 {
                (r[1] - r[0]) / (n - 1) as f64
            } else {
                0.0
            }
        };
        (d(self.x, self.nx), d(self.y, self.ny))
    }

    /// Position of cell `(ix, iy)`.
    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        let (dx, dy) = self.step();
        [self.x[0] + ix as f64 * dx, self.y[0] + iy as f64 * dy]
    }

    pub fn with_resolution(&self, nx: usize, ny: usize) -> Self {
        Self { nx, ny, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Pose of the destination keyframe.
    pub keyframe: Pose,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default = "both_controllers")]
    controllers: Vec<ControllerKind>,
    #[serde(default)]
    camera: CameraModel,
    world: Option<WorldSpec>,
    world_file: Option<PathBuf>,
    teach: Option<TeachScript>,
    #[serde(default)]
    repeat: RepeatSpec,
    #[serde(default)]
    noise: NoiseModel,
    #[serde(default)]
    navigator: NavigatorConfig,
    #[serde(default)]
    standard: StandardParams,
    #[serde(default)]
    sloped: SlopedParams,
    oracle: Option<OracleSpec>,
}

fn both_controllers() -> Vec<ControllerKind> {
    ControllerKind::ALL.to_vec()
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub controllers: Vec<ControllerKind>,
    pub camera: CameraModel,
    pub world: World,
    pub teach: Option<TeachScript>,
    pub repeat: RepeatSpec,
    pub noise: NoiseModel,
    pub navigator: NavigatorConfig,
    pub standard: StandardParams,
    pub sloped: SlopedParams,
    pub oracle: Option<OracleSpec>,
}

impl Scenario {
    pub fn load(path: &Path) -> std::result::Result<Self, LoadError> {
        let file: ScenarioFile = parse_toml(path)?;
        let world = match (&file.world, &file.world_file) {
            (Some(spec), None) => spec.build().map_err(|source| LoadError::Invalid {
                path: path.to_path_buf(),
                source,
            })?,
            (None, Some(rel)) => {
                let base = path.parent().unwrap_or(Path::new("."));
                WorldSpec::load(&base.join(rel))?
            }
            _ => {
                return Err(LoadError::parse(
                    path,
                    "exactly one of `world` or `world_file` is required",
                ))
            }
        };
        let scenario = Scenario {
            name: file.name,
            description: file.description,
            controllers: file.controllers,
            camera: file.camera,
            world,
            teach: file.teach,
            repeat: file.repeat,
            noise: file.noise,
            navigator: file.navigator,
            standard: file.standard,
            sloped: file.sloped,
            oracle: file.oracle,
        };
        scenario.validate().map_err(|source| LoadError::Invalid {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.noise.validate()?;
        self.navigator.validate()?;
        self.standard.validate()?;
        self.sloped.validate()?;
        if let Some(teach) = &self.teach {
            teach.validate()?;
        }
        if self.repeat.runs == 0 {
            return Err(NavError::InvalidConfig("repeat.runs must be >= 1".into()));
        }
        if self.controllers.is_empty() {
            return Err(NavError::InvalidConfig("no controller selected".into()));
        }
        Ok(())
    }

    pub fn teach_script(&self) -> Result<&TeachScript> {
        self.teach.as_ref().ok_or_else(|| {
            NavError::InvalidConfig(format!("scenario `{}` has no [teach] section", self.name))
        })
    }

    pub fn controller(&self, kind: ControllerKind) -> Controller {
        match kind {
            ControllerKind::Standard => Controller::Standard(self.standard),
            ControllerKind::Sloped => Controller::Sloped(SlopedController::new(self.sloped)),
        }
    }

    /// World seen during the repeat runs.
    pub fn repeat_world(&self) -> World {
        let removed: BTreeSet<_> = self.repeat.remove_landmarks.iter().copied().collect();
        self.world.without_landmarks(&removed)
    }

    pub fn repeat_start(&self) -> Result<Pose> {
        match self.repeat.start {
            Some(p) => Ok(Pose::new(p.x, p.y, p.theta)),
            None => Ok(self.teach_script()?.start),
        }
    }
}

/// Final points and goal for the `metrics` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsFile {
    pub goal: [f64; 2],
    pub points: Vec<[f64; 2]>,
}

impl PointsFile {
    pub fn load(path: &Path) -> std::result::Result<Self, LoadError> {
        parse_toml(path)
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
    toml::from_str(&text).map_err(|e| LoadError::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    const MINIMAL: &str = r#"
name = "tiny"

[world]
bounds = { min = [-5.0, -5.0], max = [5.0, 5.0] }
landmarks = [{ id = 7, x = 3.0, y = 1.0 }]
rows = [{ from = [2.0, -1.0], to = [4.0, -1.0], count = 3 }]

[teach]
start = { x = 0.0, y = 0.0, theta = 0.0 }
dt = 0.1
legs = [{ v = 0.2, omega = 0.0, duration = 2.0 }]
"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::load(&write(dir.path(), "s.toml", MINIMAL)).unwrap();
        assert_eq!(s.controllers, ControllerKind::ALL.to_vec());
        assert_eq!(s.navigator, NavigatorConfig::default());
        let ids: Vec<_> = s.world.landmarks().iter().map(|l| l.id).collect();
        assert_eq!(ids, vec![7, 8, 9, 10]);
        assert_eq!(s.world.landmark(9).unwrap().x, 3.0);
        assert_eq!(s.repeat_start().unwrap(), Pose::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn world_by_reference() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "w.toml",
            "bounds = { min = [0.0, 0.0], max = [1.0, 1.0] }\nlandmarks = [{ id = 1, x = 0.5, y = 0.5 }]\n",
        );
        let p = write(
            dir.path(),
            "s.toml",
            "name = \"r\"\nworld_file = \"w.toml\"\n",
        );
        let s = Scenario::load(&p).unwrap();
        assert_eq!(s.world.landmarks().len(), 1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.toml",
            "name = \"x\"\n[world]\nbounds = { min = [0.0, 0.0] max = [1.0] }\n",
        );
        let err = Scenario::load(&p).unwrap_err();
        assert!(matches!(err, LoadError::Parse { .. }));
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = MINIMAL.replace("name = \"tiny\"", "name = \"tiny\"\nspeed = 3");
        assert!(Scenario::load(&write(dir.path(), "s.toml", &text)).is_err());
    }

    #[test]
    fn jittered_rows_are_reproducible() {
        let spec = WorldSpec {
            bounds: Rect::new([-10.0, -10.0], [10.0, 10.0]),
            landmarks: vec![],
            rows: vec![LandmarkRow {
                from: [0.0, 0.0],
                to: [5.0, 0.0],
                count: 6,
                first_id: Some(100),
                jitter: 0.2,
            }],
            obstacles: vec![],
            seed: 9,
        };
        let a = spec.build().unwrap();
        assert_eq!(a, spec.build().unwrap());
        assert!(a.landmarks().iter().all(|l| l.y.abs() <= 0.2));
        assert_eq!(a.landmarks()[0].id, 100);
    }
}
