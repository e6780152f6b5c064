//! Scenario files, run summaries, golden traces and the drivers behind the
//! `vbsim` command line.

mod file;
mod goldens;
mod summary;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use file::{load_scenario, save_scenario, ExpectSection, NodeEntry, ScenarioFile, ScheduleSection, SystemSection, ValidityEntry};
pub use goldens::{golden_catalog, render_trace, trace_path, verify_goldens, write_catalog, GoldenResult, GoldenStatus};
pub use summary::{ByteSummary, MetricsSummary, NodeSummary};

use crate::par::Mode;
use crate::simnet::{self, ExploreError, ExploreOptions, RunOptions, Scenario, Schedule, ScriptStep, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Scenario(String),
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: Box<HarnessError> },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("missing golden: {}", .0.display())]
    MissingGolden(PathBuf),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Where the replayable schedule of a violating run goes.
pub fn witness_path(scenario_path: &Path) -> PathBuf {
    scenario_path.with_extension("witness.toml")
}

/// The scenario with its schedule replaced by a fixed script.
pub fn witness_scenario(scn: &Scenario, steps: &[ScriptStep]) -> Scenario {
    let mut w = scn.clone();
    w.name = format!("{}-witness", scn.name);
    w.schedule = Schedule::Scripted(steps.to_vec());
    w
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), HarnessError> {
    out.write_all(text.as_bytes()).map_err(|e| HarnessError::io(Path::new("<stdout>"), e))
}

pub struct RunRequest {
    pub scenario: PathBuf,
    pub seed: Option<u64>,
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

/// Runs one scenario. Returns the exit code: 0 clean, 2 on violations.
pub fn run_command(req: &RunRequest, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mut scn = load_scenario(&req.scenario)?;
    if let Some(seed) = req.seed {
        scn.schedule = Schedule::Seeded(seed);
    }
    let tracing = req.trace.is_some();
    let outcome = simnet::run_with(&scn, RunOptions { trace: tracing, budget: simnet::event_budget_from_env() })?;
    if let (Some(path), Some(trace)) = (&req.trace, &outcome.trace) {
        write_file(path, &trace.to_jsonl())?;
    }
    let summary = MetricsSummary::new(&scn, &outcome);
    match &req.summary {
        Some(path) => write_file(path, &summary.to_json())?,
        None => say(out, &summary.to_json())?,
    }
    if let Some(msg) = &summary.expectation_failure {
        eprintln!("expectation not met: {msg}");
    }
    if summary.exit_code() != 0 {
        let path = witness_path(&req.scenario);
        save_scenario(&path, &witness_scenario(&scn, &outcome.steps))?;
        for v in &summary.violations {
            eprintln!("violation: {v}");
        }
        eprintln!("witness: {}", path.display());
    }
    Ok(summary.exit_code())
}

pub struct ExploreRequest {
    pub scenario: PathBuf,
    pub depth: Option<usize>,
    pub max_states: Option<u64>,
    pub check_concrete: bool,
    pub report: Option<PathBuf>,
}

/// Explores every schedule. Returns 0 clean, 2 on violations, 1 when the
/// search did not finish.
pub fn explore_command(req: &ExploreRequest, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let scn = load_scenario(&req.scenario)?;
    let mut opts = ExploreOptions::for_scenario(&scn);
    if let Some(d) = req.depth {
        opts.depth = d;
    }
    if let Some(m) = req.max_states {
        opts.max_states = m;
    }
    opts.check_concrete = req.check_concrete;
    let (report, complete) = match simnet::explore(&scn, opts) {
        Ok(r) => (r, true),
        Err(ExploreError::BudgetExceeded(r)) => (*r, false),
        Err(ExploreError::Sim(e)) => return Err(e.into()),
    };
    let json = serde_json::to_string_pretty(&report).expect("reports always serialize") + "\n";
    match &req.report {
        Some(path) => write_file(path, &json)?,
        None => say(out, &json)?,
    }
    if let Some(w) = &report.witness {
        let path = witness_path(&req.scenario);
        save_scenario(&path, &witness_scenario(&scn, &w.steps))?;
        eprintln!("witness: {}", path.display());
    }
    if !report.is_clean() {
        return Ok(2);
    }
    if !complete {
        eprintln!("exploration stopped after {} states without covering every schedule", report.states);
        return Ok(1);
    }
    Ok(0)
}

pub struct CampaignRequest {
    pub scenario: PathBuf,
    pub runs: u64,
    pub seed: u64,
    pub mode: Mode,
}

/// Runs the scenario under many schedule seeds. Returns 0 clean, 2 on
/// violations, 1 when some run failed to complete.
pub fn campaign_command(req: &CampaignRequest, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let scn = load_scenario(&req.scenario)?;
    let report = crate::scenarios::seed_campaign(&scn, req.runs, req.seed, req.mode);
    say(out, &(serde_json::to_string_pretty(&report).expect("reports always serialize") + "\n"))?;
    Ok(if report.violating_runs > 0 {
        2
    } else if report.errors > 0 {
        1
    } else {
        0
    })
}

/// Writes the named scenario family as scenario files into `dir`.
pub fn scenario_command(name: &str, f: usize, dir: &Path, out: &mut dyn Write) -> Result<i32, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for ns in crate::scenarios::by_name(name, f)? {
        let path = dir.join(format!("{}.toml", ns.name));
        save_scenario(&path, &ns.scenario)?;
        say(out, &format!("{}\n", path.display()))?;
    }
    Ok(0)
}

/// Verifies (or blesses) the golden traces in `dir`. Returns 1 on drift.
pub fn goldens_command(dir: &Path, bless: bool, init: bool, out: &mut dyn Write) -> Result<i32, HarnessError> {
    if init {
        write_catalog(dir)?;
    }
    let results = verify_goldens(dir, bless)?;
    let mut drift = false;
    for r in &results {
        let line = match &r.status {
            GoldenStatus::Match => format!("ok      {}\n", r.name),
            GoldenStatus::Blessed => format!("blessed {}\n", r.name),
            GoldenStatus::Drift { line, expected, actual } => {
                drift = true;
                format!("DRIFT   {} at line {line}\n  expected: {expected}\n  actual:   {actual}\n", r.name)
            }
        };
        say(out, &line)?;
    }
    Ok(drift as i32)
}
