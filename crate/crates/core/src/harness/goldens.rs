use std::path::{Path, PathBuf};

use serde::Serialize;

use super::file::load_scenario;
use super::HarnessError;
use crate::scenarios::{self, NamedScenario};
use crate::simnet::{self, RunOptions, Scenario};

/// Scenarios whose traces are checked in.
pub fn golden_catalog() -> Result<Vec<NamedScenario>, HarnessError> {
    let mut out = Vec::new();
    for f in [1, 2] {
        out.push(scenarios::figure1_benign(f)?);
        out.push(scenarios::figure2_classical(f)?);
        out.push(scenarios::figure3_external(f)?);
    }
    out.extend(scenarios::lower_bound_sigma(1)?);
    Ok(out)
}

/// Trace of one run in line-delimited form.
pub fn render_trace(scn: &Scenario) -> Result<String, HarnessError> {
    let out = simnet::run_with(scn, RunOptions { trace: true, budget: simnet::event_budget_from_env() })?;
    Ok(out.trace.expect("tracing was requested").to_jsonl())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GoldenStatus {
    Match,
    /// First differing line, 1-based.
    Drift { line: usize, expected: String, actual: String },
    Blessed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoldenResult {
    pub name: String,
    #[serde(flatten)]
    pub status: GoldenStatus,
}

pub fn trace_path(scenario_path: &Path) -> PathBuf {
    scenario_path.with_extension("trace.jsonl")
}

fn golden_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".toml") && !name.ends_with(".witness.toml") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Replays every scenario file in `dir` and compares its trace with the
/// checked-in `.trace.jsonl` byte for byte. With `bless`, writes the traces
/// instead.
pub fn verify_goldens(dir: &Path, bless: bool) -> Result<Vec<GoldenResult>, HarnessError> {
    let files = golden_files(dir)?;
    if files.is_empty() {
        return Err(HarnessError::MissingGolden(dir.to_path_buf()));
    }
    let mut results = Vec::new();
    for path in files {
        let scn = load_scenario(&path)?;
        let actual = render_trace(&scn)?;
        let golden = trace_path(&path);
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if bless {
            std::fs::write(&golden, &actual).map_err(|e| HarnessError::io(&golden, e))?;
            results.push(GoldenResult { name, status: GoldenStatus::Blessed });
            continue;
        }
        let expected = match std::fs::read_to_string(&golden) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(HarnessError::MissingGolden(golden)),
            Err(e) => return Err(HarnessError::io(&golden, e)),
        };
        let status = if expected == actual {
            GoldenStatus::Match
        } else {
            let mut exp = expected.lines();
            let mut act = actual.lines();
            let mut line = 1;
            loop {
                match (exp.next(), act.next()) {
                    (Some(a), Some(b)) if a == b => line += 1,
                    (a, b) => {
                        break GoldenStatus::Drift {
                            line,
                            expected: a.unwrap_or("<end of file>").to_string(),
                            actual: b.unwrap_or("<end of file>").to_string(),
                        }
                    }
                }
            }
        };
        results.push(GoldenResult { name, status });
    }
    Ok(results)
}

/// Writes the catalog's scenario files into `dir`, one per scenario.
pub fn write_catalog(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut out = Vec::new();
    for ns in golden_catalog()? {
        let path = dir.join(format!("{}.toml", ns.name));
        super::file::save_scenario(&path, &ns.scenario)?;
        out.push(path);
    }
    Ok(out)
}
