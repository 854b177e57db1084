//! Accuracy and repeatability metrics, the grid-sampled funnel lane oracle
//! and the scenario batch runner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerKind};
use crate::error::{NavError, Result};
use crate::geometry::{self, CameraModel, Pose, World};
use crate::navigator::{self, Outcome, RunTrace};
use crate::scenario::{GridSpec, Scenario, StartJitter};
use crate::teach;
use crate::visual_path::{Keyframe, MatchSet, VisualPath};

pub type Point = [f64; 2];

/// Environment variable capping the number of batch worker threads.
pub const THREADS_ENV: &str = "FUNNEL_NAV_THREADS";

fn sq_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Componentwise mean, accumulated as offsets from the first point so
/// identical points give their own value back exactly.
pub fn mean_point(points: &[Point]) -> Result<Point> {
    let Some(&origin) = points.first() else {
        return Err(NavError::EmptyPoints);
    };
    let n = points.len() as f64;
    let (dx, dy) = points.iter().fold((0.0, 0.0), |(dx, dy), p| {
        (dx + (p[0] - origin[0]), dy + (p[1] - origin[1]))
    });
    Ok([origin[0] + dx / n, origin[1] + dy / n])
}

/// RMS distance of the final points to the goal.
pub fn accuracy(points: &[Point], goal: Point) -> Result<f64> {
    if points.is_empty() {
        return Err(NavError::EmptyPoints);
    }
    let sum: f64 = points.iter().map(|&p| sq_dist(p, goal)).sum();
    Ok((sum / points.len() as f64).sqrt())
}

/// RMS distance of the final points to their own mean.
pub fn repeatability(points: &[Point]) -> Result<f64> {
    let mu = mean_point(points)?;
    let sum: f64 = points.iter().map(|&p| sq_dist(p, mu)).sum();
    Ok((sum / points.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub done: usize,
    pub lost: usize,
    pub timeout: usize,
    pub collision: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Done => self.done += 1,
            Outcome::Lost => self.lost += 1,
            Outcome::Timeout => self.timeout += 1,
            Outcome::Collision => self.collision += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.done + self.lost + self.timeout + self.collision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub controller: Option<ControllerKind>,
    pub accuracy: f64,
    pub repeatability: f64,
    pub goal: Point,
    pub final_points: Vec<Point>,
    pub outcomes: OutcomeCounts,
    /// Runs that finished `done` within the success tolerance of the goal.
    pub within_tolerance: usize,
}

impl MetricsReport {
    pub fn from_points(
        controller: Option<ControllerKind>,
        goal: Point,
        final_points: Vec<Point>,
        outcomes: OutcomeCounts,
    ) -> Result<Self> {
        Ok(Self {
            controller,
            accuracy: accuracy(&final_points, goal)?,
            repeatability: repeatability(&final_points)?,
            goal,
            final_points,
            outcomes,
            within_tolerance: 0,
        })
    }
}

/// Distance a grid pose on top of the keyframe is moved back along the
/// heading before testing, meters.
pub const KEYFRAME_BACKOFF: f64 = 1e-6;

/// Pose sampled for grid cell `(ix, iy)`: the keyframe heading at the cell
/// position, moved back by [`KEYFRAME_BACKOFF`] when it coincides with the keyframe.
pub fn sample_pose(grid: &GridSpec, ix: usize, iy: usize, keyframe: &Pose) -> Pose {
    let [x, y] = grid.point(ix, iy);
    let heading = keyframe.theta;
    if (x - keyframe.x).hypot(y - keyframe.y) < KEYFRAME_BACKOFF {
        let (sin, cos) = heading.sin_cos();
        Pose::new(
            keyframe.x - KEYFRAME_BACKOFF * cos,
            keyframe.y - KEYFRAME_BACKOFF * sin,
            heading,
        )
    } else {
        Pose::new(x, y, heading)
    }
}

/// Pose grid with a shared heading and a per-cell inside flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FunnelMap {
    pub grid: GridSpec,
    pub keyframe: Pose,
    /// Row-major over `(ix, iy)`: index `iy * nx + ix`.
    pub inside: Vec<bool>,
}

impl FunnelMap {
    pub fn pose(&self, ix: usize, iy: usize) -> Pose {
        sample_pose(&self.grid, ix, iy, &self.keyframe)
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.inside[iy * self.grid.nx + ix]
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Inside poses as grid indices.
    pub fn inside_cells(&self) -> Vec<(usize, usize)> {
        cells(&self.grid)
            .filter(|&(ix, iy)| self.get(ix, iy))
            .collect()
    }

    /// True when a cell's 8-neighbourhood holds both labels.
    pub fn near_boundary(&self, ix: usize, iy: usize) -> bool {
        let own = self.get(ix, iy);
        (-1i64..=1).any(|dy| {
            (-1i64..=1).any(|dx| {
                let (nx, ny) = (ix as i64 + dx, iy as i64 + dy);
                nx >= 0
                    && ny >= 0
                    && (nx as usize) < self.grid.nx
                    && (ny as usize) < self.grid.ny
                    && self.get(nx as usize, ny as usize) != own
            })
        })
    }
}

fn cells(grid: &GridSpec) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..grid.ny).flat_map(move |iy| (0..grid.nx).map(move |ix| (ix, iy)))
}

/// Brute-force combined funnel lane of a keyframe.
///
/// Every grid pose takes the keyframe's heading (see [`sample_pose`]). A
/// pose is inside when every landmark observed in the keyframe projects into
/// the current image with a strictly smaller magnitude and the same sign as
/// in the keyframe.
pub fn funnel_oracle(
    kf: &Keyframe,
    world: &World,
    cam: &CameraModel,
    grid: &GridSpec,
) -> FunnelMap {
    let inside = cells(grid)
        .map(|(ix, iy)| {
            let pose = sample_pose(grid, ix, iy, &kf.pose_truth);
            kf.observations.iter().all(|(id, &u_kf)| {
                let Some(landmark) = world.landmark(*id) else {
                    return false;
                };
                match geometry::project(landmark, &pose, cam) {
                    Some(u) => u.abs() < u_kf.abs() && (u * u_kf > 0.0 || u == 0.0 || u_kf == 0.0),
                    None => false,
                }
            })
        })
        .collect();
    FunnelMap {
        grid: *grid,
        keyframe: kf.pose_truth,
        inside,
    }
}

/// The controller's own lane test from a noise-free view at `pose`.
/// Requires every keyframe feature to be matched.
pub fn controller_inside(
    controller: &Controller,
    kf: &Keyframe,
    world: &World,
    cam: &CameraModel,
    pose: &Pose,
) -> bool {
    let m = MatchSet::exact(&geometry::visible_set(world, pose, cam), &kf.observations);
    m.len() == kf.observations.len() && controller.claims_inside(&m).unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub controller: ControllerKind,
    pub total: usize,
    pub agree: usize,
    /// Disagreeing poses with the oracle and controller labels.
    pub disagreements: Vec<Disagreement>,
    /// Disagreements with no label change within one grid step.
    pub off_boundary: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub x: f64,
    pub y: f64,
    pub oracle_inside: bool,
    pub controller_inside: bool,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.agree as f64 / self.total as f64
        }
    }
}

pub fn oracle_agreement(
    oracle: &FunnelMap,
    controller: &Controller,
    kf: &Keyframe,
    world: &World,
    cam: &CameraModel,
) -> Agreement {
    let mut agreement = Agreement {
        controller: controller.kind(),
        total: oracle.grid.len(),
        agree: 0,
        disagreements: Vec::new(),
        off_boundary: 0,
    };
    for (ix, iy) in cells(&oracle.grid) {
        let pose = oracle.pose(ix, iy);
        let claimed = controller_inside(controller, kf, world, cam, &pose);
        let truth = oracle.get(ix, iy);
        if claimed == truth {
            agreement.agree += 1;
        } else {
            agreement.disagreements.push(Disagreement {
                x: pose.x,
                y: pose.y,
                oracle_inside: truth,
                controller_inside: claimed,
            });
            if !oracle.near_boundary(ix, iy) {
                agreement.off_boundary += 1;
            }
        }
    }
    agreement
}

/// Keyframe whose observations are the noise-free view from `pose`.
pub fn keyframe_at(world: &World, cam: &CameraModel, pose: Pose) -> Keyframe {
    Keyframe {
        index: 0,
        pose_truth: pose,
        observations: geometry::visible_set(world, &pose, cam),
    }
}

/// Seed of run `index` in a batch.
pub fn run_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finalizer over the run index
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Start pose of one run, perturbed by the configured jitter.
pub fn jittered_start(start: Pose, jitter: &StartJitter, seed: u64) -> Pose {
    if jitter.position <= 0.0 && jitter.heading <= 0.0 {
        return start;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_4152_5453_5441);
    let mut draw = |sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma)
                .expect("positive sigma")
                .sample(&mut rng)
        } else {
            0.0
        }
    };
    let dx = draw(jitter.position);
    let dy = draw(jitter.position);
    let dth = draw(jitter.heading);
    Pose::new(start.x + dx, start.y + dy, start.theta + dth)
}

/// Teach once, then repeat `runs` times with each selected controller.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub path: VisualPath,
    pub teach_trajectory: Vec<Pose>,
    pub batches: Vec<ControllerBatch>,
}

#[derive(Debug, Clone)]
pub struct ControllerBatch {
    pub controller: ControllerKind,
    pub runs: Vec<RunTrace>,
    pub report: MetricsReport,
}

/// Runs a scenario for the given controllers with identical per-run seeds.
pub fn run_scenario(s: &Scenario, controllers: &[ControllerKind]) -> Result<ScenarioRun> {
    let recording = teach::record_with_trajectory(&s.world, &s.camera, s.teach_script()?)?;
    let path = recording.path;
    let goal = path
        .keyframes()
        .last()
        .expect("path has keyframes")
        .pose_truth
        .position();
    let repeat_world = s.repeat_world();
    let start = s.repeat_start()?;

    let mut batches = Vec::new();
    for &kind in controllers {
        let controller = s.controller(kind);
        let runs: Vec<Result<RunTrace>> = with_batch_pool(|| {
            (0..s.repeat.runs)
                .into_par_iter()
                .map(|i| {
                    let seed = run_seed(s.noise.seed, i);
                    let noise = s.noise.with_seed(seed);
                    let start = jittered_start(start, &s.repeat.start_jitter, seed);
                    navigator::navigate(
                        &repeat_world,
                        &s.camera,
                        &path,
                        start,
                        &s.navigator,
                        &controller,
                        &noise,
                    )
                })
                .collect()
        });
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        let mut outcomes = OutcomeCounts::default();
        let mut within = 0;
        let points: Vec<Point> = runs
            .iter()
            .map(|r| {
                outcomes.add(r.outcome());
                let p = r.final_pose().position();
                if r.outcome() == Outcome::Done
                    && sq_dist(p, goal).sqrt() <= s.repeat.success_tolerance
                {
                    within += 1;
                }
                p
            })
            .collect();
        let mut report = MetricsReport::from_points(Some(kind), goal, points, outcomes)?;
        report.within_tolerance = within;
        batches.push(ControllerBatch {
            controller: kind,
            runs,
            report,
        });
    }
    Ok(ScenarioRun {
        path,
        teach_trajectory: recording.trajectory,
        batches,
    })
}

fn with_batch_pool<T: Send>(job: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(job))
            .unwrap_or_else(|_| panic!("cannot build a {n}-thread pool")),
        None => job(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{SlopedController, StandardParams};
    use crate::geometry::{Landmark, Rect};

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[[2.0, 3.0]], [2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(
            accuracy(&[[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0]).unwrap(),
            1.0
        );
        assert_eq!(accuracy(&[], [0.0, 0.0]), Err(NavError::EmptyPoints));
    }

    #[test]
    fn repeatability_examples() {
        assert_eq!(repeatability(&[[1.5, -2.0]; 4]).unwrap(), 0.0);
        assert_eq!(
            repeatability(&[[25.010186235660555, -0.07783835677345578]; 3]).unwrap(),
            0.0
        );
        assert_eq!(repeatability(&[[0.0, 0.0], [2.0, 0.0]]).unwrap(), 1.0);
        assert_eq!(repeatability(&[]), Err(NavError::EmptyPoints));
    }

    #[test]
    fn run_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<_> = (0..100).map(|i| run_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }

    #[test]
    fn jitter_is_seeded() {
        let start = Pose::new(1.0, 2.0, 0.5);
        let j = StartJitter {
            position: 0.05,
            heading: 0.02,
        };
        assert_eq!(jittered_start(start, &j, 3), jittered_start(start, &j, 3));
        assert_ne!(jittered_start(start, &j, 3), jittered_start(start, &j, 4));
        assert_eq!(jittered_start(start, &StartJitter::default(), 3), start);
    }

    fn two_feature() -> (World, CameraModel, Keyframe) {
        let world = World::new(
            vec![
                Landmark {
                    id: 1,
                    x: 4.0,
                    y: 1.0,
                },
                Landmark {
                    id: 2,
                    x: 5.0,
                    y: -1.5,
                },
            ],
            Rect::new([-10.0, -10.0], [10.0, 10.0]),
            vec![],
        )
        .unwrap();
        let cam = CameraModel::default();
        let kf = keyframe_at(&world, &cam, Pose::new(0.0, 0.0, 0.0));
        (world, cam, kf)
    }

    #[test]
    fn oracle_point_checks() {
        let (world, cam, kf) = two_feature();
        let grid = GridSpec {
            x: [-2.0, 0.0],
            y: [-2.0, 2.0],
            nx: 3,
            ny: 5,
        };
        let map = funnel_oracle(&kf, &world, &cam, &grid);
        // one metre straight behind the keyframe: inside
        assert!(map.get(1, 2));
        // the keyframe cell is tested just behind the keyframe
        assert!(map.get(2, 2));
        assert!(map.pose(2, 2).x < 0.0);
        // two metres to the side: outside
        assert!(!map.get(0, 0) && !map.get(0, 4));
    }

    #[test]
    fn combined_lane_is_intersection_of_single_lanes() {
        let (world, cam, kf) = two_feature();
        let grid = GridSpec {
            x: [-4.0, -0.01],
            y: [-2.0, 2.0],
            nx: 40,
            ny: 40,
        };
        let both = funnel_oracle(&kf, &world, &cam, &grid);
        let single = |id| {
            let mut k = kf.clone();
            k.observations.retain(|i, _| *i == id);
            funnel_oracle(&k, &world, &cam, &grid)
        };
        let (a, b) = (single(1), single(2));
        for i in 0..both.inside.len() {
            assert_eq!(both.inside[i], a.inside[i] && b.inside[i]);
        }
        assert!(both.inside_count() > 0 && both.inside_count() < a.inside_count());
    }

    #[test]
    fn controllers_agree_with_oracle_on_small_grid() {
        let (world, cam, kf) = two_feature();
        let grid = GridSpec {
            x: [-4.0, 0.0],
            y: [-2.0, 2.0],
            nx: 30,
            ny: 30,
        };
        let map = funnel_oracle(&kf, &world, &cam, &grid);
        for c in [
            Controller::Standard(StandardParams::default()),
            Controller::Sloped(SlopedController::default()),
        ] {
            let a = oracle_agreement(&map, &c, &kf, &world, &cam);
            assert_eq!(a.off_boundary, 0);
            assert!(a.fraction() >= 0.99, "{:?}", a.controller);
        }
    }
}
