//! Writing run artifacts to an output directory.
//!
//! Everything except `meta.json` is a pure function of the inputs, so two
//! runs with the same configuration and seed produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::evaluation::{Agreement, ControllerBatch, MetricsReport, ScenarioRun};
use crate::geometry::Pose;
use crate::visual_path::VisualPath;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{} already exists and is not empty (use --force to overwrite)", .0.display())]
    Exists(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// An output directory that has been checked for overwrites.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// Creates `root` if absent. An existing non-empty directory is only
    /// accepted with `force`.
    pub fn prepare(root: &Path, force: bool) -> Result<Self, OutputError> {
        let io_err = |source| OutputError::Io {
            path: root.to_path_buf(),
            source,
        };
        if root.exists() {
            let non_empty = fs::read_dir(root).map_err(io_err)?.next().is_some();
            if non_empty && !force {
                return Err(OutputError::Exists(root.to_path_buf()));
            }
        } else {
            fs::create_dir_all(root).map_err(io_err)?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(
        &self,
        relative: impl AsRef<Path>,
        contents: impl AsRef<[u8]>,
    ) -> Result<PathBuf, OutputError> {
        let path = self.root.join(relative);
        let io_err = |source| OutputError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(&path, contents).map_err(io_err)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(
        &self,
        relative: impl AsRef<Path>,
        value: &T,
    ) -> Result<PathBuf, OutputError> {
        let mut text = serde_json::to_string_pretty(value).expect("value serializes");
        text.push('\n');
        self.write(relative, text)
    }

    /// Removes a subdirectory this tool owns so stale files do not survive a forced rerun.
    pub fn clear(&self, relative: impl AsRef<Path>) -> Result<(), OutputError> {
        let path = self.root.join(relative);
        match fs::remove_dir_all(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(source) => Err(OutputError::Io { path, source }),
        }
    }
}

/// `index,observations,x,y,theta` per keyframe.
pub fn keyframes_csv(path: &VisualPath) -> String {
    let mut out = String::from("index,observations,x,y,theta\n");
    for kf in path.keyframes() {
        let p = kf.pose_truth;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            kf.index,
            kf.observations.len(),
            p.x,
            p.y,
            p.theta
        );
    }
    out
}

/// Teach trajectory followed by every repeat run, as `source,run,tick,x,y,theta`.
/// Teach rows use run `0`; repeat rows end with the final pose.
pub fn trajectories_csv(teach: &[Pose], batches: &[ControllerBatch]) -> String {
    let mut out = String::from("source,run,tick,x,y,theta\n");
    let mut row = |source: &str, run: usize, tick: usize, p: &Pose| {
        let _ = writeln!(out, "{source},{run},{tick},{},{},{}", p.x, p.y, p.theta);
    };
    for (i, p) in teach.iter().enumerate() {
        row("teach", 0, i, p);
    }
    for batch in batches {
        for (run, trace) in batch.runs.iter().enumerate() {
            for t in &trace.ticks {
                row(
                    batch.controller.name(),
                    run,
                    t.tick,
                    &Pose::new(t.x, t.y, t.theta),
                );
            }
            row(
                batch.controller.name(),
                run,
                trace.ticks.len(),
                &trace.final_pose(),
            );
        }
    }
    out
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    scenario: &'a str,
    base_seed: u64,
    runs: usize,
    success_tolerance: f64,
    keyframes: usize,
    controllers: Vec<&'a MetricsReport>,
}

/// Writes the path, keyframe table, per-run traces, trajectories and metrics.
pub fn write_scenario_run(
    dir: &OutputDir,
    scenario: &str,
    base_seed: u64,
    success_tolerance: f64,
    run: &ScenarioRun,
) -> Result<(), OutputError> {
    write_teach(dir, &run.path, &run.teach_trajectory)?;
    dir.clear("traces")?;
    for batch in &run.batches {
        for (i, trace) in batch.runs.iter().enumerate() {
            dir.write(
                Path::new("traces")
                    .join(batch.controller.name())
                    .join(format!("run_{i:02}.jsonl")),
                trace.to_jsonl(),
            )?;
        }
    }
    dir.write(
        "trajectories.csv",
        trajectories_csv(&run.teach_trajectory, &run.batches),
    )?;
    let metrics = MetricsFile {
        scenario,
        base_seed,
        runs: run.batches.first().map_or(0, |b| b.runs.len()),
        success_tolerance,
        keyframes: run.path.keyframes().len(),
        controllers: run.batches.iter().map(|b| &b.report).collect(),
    };
    dir.write_json("metrics.json", &metrics)?;
    dir.write("summary.txt", metrics_table(scenario, &run.batches))?;
    Ok(())
}

pub fn write_teach(
    dir: &OutputDir,
    path: &VisualPath,
    trajectory: &[Pose],
) -> Result<(), OutputError> {
    dir.write("visual_path.json", path.to_json())?;
    dir.write("keyframes.csv", keyframes_csv(path))?;
    let mut teach = String::from("tick,x,y,theta\n");
    for (i, p) in trajectory.iter().enumerate() {
        let _ = writeln!(teach, "{i},{},{},{}", p.x, p.y, p.theta);
    }
    dir.write("teach_trajectory.csv", teach)?;
    Ok(())
}

/// Accuracy/repeatability table with outcome counts.
pub fn metrics_table(scenario: &str, batches: &[ControllerBatch]) -> String {
    let mut out = String::new();
    let runs = batches.first().map_or(0, |b| b.runs.len());
    let _ = writeln!(out, "scenario {scenario}: {runs} runs per controller");
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>13} {:>5} {:>5} {:>8} {:>10} {:>10}",
        "controller",
        "accuracy",
        "repeatability",
        "done",
        "lost",
        "timeout",
        "collision",
        "within_tol"
    );
    for b in batches {
        let r = &b.report;
        let _ = writeln!(
            out,
            "{:<10} {:>10.3} {:>13.3} {:>5} {:>5} {:>8} {:>10} {:>10}",
            b.controller.name(),
            r.accuracy,
            r.repeatability,
            r.outcomes.done,
            r.outcomes.lost,
            r.outcomes.timeout,
            r.outcomes.collision,
            r.within_tolerance,
        );
    }
    out
}

/// One line per controller with the agreement percentage.
pub fn agreement_table(agreements: &[Agreement]) -> String {
    let mut out = String::new();
    for a in agreements {
        let _ = writeln!(
            out,
            "{:<10} agreement {:>7.3}% ({}/{}), {} disagreements, {} away from a boundary",
            a.controller.name(),
            100.0 * a.fraction(),
            a.agree,
            a.total,
            a.disagreements.len(),
            a.off_boundary,
        );
    }
    out
}

/// `controller,x,y,oracle_inside,controller_inside`.
pub fn disagreements_csv(agreements: &[Agreement]) -> String {
    let mut out = String::from("controller,x,y,oracle_inside,controller_inside\n");
    for a in agreements {
        for d in &a.disagreements {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                a.controller.name(),
                d.x,
                d.y,
                d.oracle_inside,
                d.controller_inside
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_non_empty_directory_without_force() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("out");
        let dir = OutputDir::prepare(&root, false).unwrap();
        dir.write("a/b.txt", "x").unwrap();
        assert!(matches!(
            OutputDir::prepare(&root, false),
            Err(OutputError::Exists(_))
        ));
        assert!(OutputDir::prepare(&root, true).is_ok());
        assert_eq!(fs::read_to_string(root.join("a/b.txt")).unwrap(), "x");
    }

    #[test]
    fn empty_existing_directory_is_accepted() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(OutputDir::prepare(tmp.path(), false).is_ok());
    }
}
