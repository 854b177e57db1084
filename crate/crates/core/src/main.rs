use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use funnel_nav::evaluation::{self, MetricsReport, OutcomeCounts};
use funnel_nav::output::{self, OutputDir, OutputError};
use funnel_nav::scenario::PointsFile;
use funnel_nav::{teach, ControllerKind, LoadError, NavError, Scenario};

#[derive(Parser)]
#[command(
    name = "funnel-nav",
    version,
    about = "Teach-and-repeat navigation with funnel lane controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the teach script and write the visual path.
    Teach(Common),
    /// Teach, then repeat with one controller.
    Repeat(Common),
    /// Teach, then repeat with both controllers on identical seeds.
    Compare(Common),
    /// Compare controller lane tests against the brute-force oracle on a pose grid.
    OracleCheck(Common),
    /// Accuracy and repeatability of a points file.
    Metrics(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (points file for `metrics`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Base seed for the repeat runs, overriding the scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Write into an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

/// Exit statuses besides success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Config = 2,
    Degenerate = 3,
    Internal = 4,
}

struct Failure {
    status: Status,
    error: anyhow::Error,
}

impl Failure {
    fn new(status: Status, error: impl Into<anyhow::Error>) -> Self {
        Self {
            status,
            error: error.into(),
        }
    }
}

impl From<NavError> for Failure {
    fn from(e: NavError) -> Self {
        let status = match e {
            NavError::TeachDegenerate { .. } | NavError::InvalidPath(_) | NavError::EmptyPoints => {
                Status::Degenerate
            }
            NavError::InvalidConfig(_) | NavError::InvalidWorld(_) => Status::Config,
            NavError::DegenerateSpread { .. } | NavError::EmptyMatch => Status::Internal,
        };
        Self::new(status, e)
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Self::new(Status::Config, e)
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        let status = match e {
            OutputError::Exists(_) => Status::Config,
            OutputError::Io { .. } => Status::Internal,
        };
        Self::new(status, e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Teach(c) => cmd_teach(c),
        Command::Repeat(c) => cmd_repeat(c),
        Command::Compare(c) => cmd_compare(c),
        Command::OracleCheck(c) => cmd_oracle_check(c),
        Command::Metrics(c) => cmd_metrics(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.status as u8)
        }
    }
}

fn load(c: &Common) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(&c.config)?;
    if let Some(seed) = c.seed {
        s.noise.seed = seed;
    }
    Ok(s)
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    config: &'a Path,
    seed: Option<u64>,
    version: &'a str,
    unix_time: u64,
}

fn write_meta(dir: &OutputDir, command: &str, c: &Common, seed: Option<u64>) -> CmdResult {
    let unix_time = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    dir.write_json(
        "meta.json",
        &Meta {
            command,
            config: &c.config,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            unix_time,
        },
    )?;
    Ok(())
}

fn cmd_teach(c: &Common) -> CmdResult {
    let s = load(c)?;
    let recording = teach::record_with_trajectory(&s.world, &s.camera, s.teach_script()?)?;
    let dir = OutputDir::prepare(&c.out, c.force)?;
    output::write_teach(&dir, &recording.path, &recording.trajectory)?;
    write_meta(&dir, "teach", c, None)?;
    print!("{}", output::keyframes_csv(&recording.path));
    Ok(())
}

fn cmd_repeat(c: &Common) -> CmdResult {
    let s = load(c)?;
    let kind = c.controller.unwrap_or(s.controllers[0]);
    run_batches(c, &s, &[kind], "repeat")
}

fn cmd_compare(c: &Common) -> CmdResult {
    let s = load(c)?;
    let kinds: Vec<ControllerKind> = match c.controller {
        Some(k) => vec![k],
        None => ControllerKind::ALL.to_vec(),
    };
    run_batches(c, &s, &kinds, "compare")
}

fn run_batches(c: &Common, s: &Scenario, kinds: &[ControllerKind], command: &str) -> CmdResult {
    let run = evaluation::run_scenario(s, kinds)?;
    let dir = OutputDir::prepare(&c.out, c.force)?;
    output::write_scenario_run(
        &dir,
        &s.name,
        s.noise.seed,
        s.repeat.success_tolerance,
        &run,
    )?;
    write_meta(&dir, command, c, Some(s.noise.seed))?;
    print!("{}", output::metrics_table(&s.name, &run.batches));
    Ok(())
}

fn cmd_oracle_check(c: &Common) -> CmdResult {
    let s = load(c)?;
    let spec = s.oracle.clone().ok_or_else(|| {
        Failure::new(
            Status::Config,
            anyhow::anyhow!("{}: scenario has no [oracle] section", c.config.display()),
        )
    })?;
    if s.world.landmarks().is_empty() {
        return Err(Failure::new(
            Status::Degenerate,
            anyhow::anyhow!("the world has no landmarks"),
        ));
    }
    if spec.grid.is_empty() {
        return Err(Failure::new(
            Status::Config,
            anyhow::anyhow!("oracle grid is empty"),
        ));
    }
    let kf = evaluation::keyframe_at(&s.world, &s.camera, spec.keyframe);
    if kf.observations.is_empty() {
        return Err(Failure::new(
            Status::Degenerate,
            anyhow::anyhow!("no landmark is visible from the oracle keyframe"),
        ));
    }
    let map = evaluation::funnel_oracle(&kf, &s.world, &s.camera, &spec.grid);
    let kinds = match c.controller {
        Some(k) => vec![k],
        None => s.controllers.clone(),
    };
    let agreements: Vec<_> = kinds
        .iter()
        .map(|&k| evaluation::oracle_agreement(&map, &s.controller(k), &kf, &s.world, &s.camera))
        .collect();

    #[derive(Serialize)]
    struct Summary<'a> {
        scenario: &'a str,
        grid_poses: usize,
        oracle_inside: usize,
        controllers: Vec<ControllerAgreement>,
    }
    #[derive(Serialize)]
    struct ControllerAgreement {
        controller: ControllerKind,
        agreement: f64,
        agree: usize,
        disagreements: usize,
        off_boundary: usize,
    }
    let summary = Summary {
        scenario: &s.name,
        grid_poses: spec.grid.len(),
        oracle_inside: map.inside_count(),
        controllers: agreements
            .iter()
            .map(|a| ControllerAgreement {
                controller: a.controller,
                agreement: a.fraction(),
                agree: a.agree,
                disagreements: a.disagreements.len(),
                off_boundary: a.off_boundary,
            })
            .collect(),
    };
    let dir = OutputDir::prepare(&c.out, c.force)?;
    dir.write_json("agreement.json", &summary)?;
    dir.write("disagreements.csv", output::disagreements_csv(&agreements))?;
    write_meta(&dir, "oracle-check", c, None)?;
    print!("{}", output::agreement_table(&agreements));
    Ok(())
}

fn cmd_metrics(c: &Common) -> CmdResult {
    let points = PointsFile::load(&c.config)?;
    let report =
        MetricsReport::from_points(None, points.goal, points.points, OutcomeCounts::default())?;
    let dir = OutputDir::prepare(&c.out, c.force)?;
    dir.write_json("metrics.json", &report)?;
    write_meta(&dir, "metrics", c, None)?;
    println!(
        "accuracy {:.6} repeatability {:.6} over {} points",
        report.accuracy,
        report.repeatability,
        report.final_points.len()
    );
    Ok(())
}
