//! Canonical worst-case scenarios, the lower-bound executions and seeded
//! random campaigns.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::optimizer::DecisionPath;
use crate::par::{self, Mode};
use crate::simnet::{
    self, ByzantineStrategy, Expectation, Fault, MessageKind, RunOptions, RunOutcome, Scenario, Schedule, ScriptStep,
};
use crate::types::{CriteriaSelection, FailureModel, FullValue, NodeId, OptimizerConfig, ValidityTable, ValuePayload};

/// A scenario together with the outcome it must produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedScenario {
    pub name: String,
    pub scenario: Scenario,
    pub expected: Expectation,
}

impl NamedScenario {
    fn new(mut scenario: Scenario, expected: Expectation) -> Self {
        scenario.expect = Some(expected.clone());
        NamedScenario { name: scenario.name.clone(), scenario, expected }
    }
}

pub fn v() -> ValuePayload {
    ValuePayload::new("v").expect("non-empty")
}

pub fn u() -> ValuePayload {
    ValuePayload::new("u").expect("non-empty")
}

fn deliver(from: usize, to: usize, val: &ValuePayload) -> ScriptStep {
    ScriptStep::Deliver { from: NodeId(from), to: NodeId(to), kind: MessageKind::Val, val: Some(val.clone()) }
}

fn degenerate(f: usize) -> Result<(), simnet::SimError> {
    if f == 0 {
        return Err(simnet::SimError::ScenarioInvalid("f must be at least 1".into()));
    }
    Ok(())
}

fn inputs(values: &[&ValuePayload]) -> Vec<FullValue> {
    values.iter().map(|x| FullValue::bare((*x).clone())).collect()
}

/// Benign worst case, `n = 2f + 1`: nodes `0..=f` start with v, the rest
/// with u. Node 0 hears only v-votes; the last node hears every u-vote
/// before a single v.
pub fn figure1_benign(f: usize) -> Result<NamedScenario, simnet::SimError> {
    degenerate(f)?;
    let n = 2 * f + 1;
    let (v, u) = (v(), u());
    let vals: Vec<&ValuePayload> = (0..n).map(|i| if i <= f { &v } else { &u }).collect();
    let q = n - 1;
    let mut script: Vec<ScriptStep> = (1..=f).map(|i| deliver(i, 0, &v)).collect();
    script.extend((f + 1..q).map(|i| deliver(i, q, &u)));
    script.push(deliver(0, q, &v));
    let cfg = OptimizerConfig::new(n, f, FullValue::bare(v.clone()), FailureModel::Benign);
    let scn = Scenario {
        name: format!("figure1-f{f}"),
        initial_values: inputs(&vals),
        faults: vec![Fault::Correct; n],
        schedule: Schedule::Scripted(script),
        ..Scenario::new("", cfg, &[])
    };
    scn.validate()?;
    Ok(NamedScenario::new(scn, Expectation::MixedPathsDecide(v)))
}

/// Classical worst case, `n = 4f + 1`: `2f + 1` correct v-nodes, `f`
/// correct u-nodes, `f` Byzantine nodes sending v to everyone except the
/// last correct node, which gets u.
pub fn figure2_classical(f: usize) -> Result<NamedScenario, simnet::SimError> {
    figure2_with(f, false)
}

/// Same as [`figure2_classical`] with silent Byzantine nodes.
pub fn figure2_silent(f: usize) -> Result<NamedScenario, simnet::SimError> {
    figure2_with(f, true)
}

fn figure2_with(f: usize, silent: bool) -> Result<NamedScenario, simnet::SimError> {
    degenerate(f)?;
    let n = 4 * f + 1;
    let q = 3 * f;
    let (v, u) = (v(), u());
    let byz: Vec<usize> = (3 * f + 1..n).collect();
    let vals: Vec<&ValuePayload> = (0..n).map(|i| if i <= 2 * f || i > q { &v } else { &u }).collect();
    let strategy = if silent {
        ByzantineStrategy::Silent
    } else {
        ByzantineStrategy::Equivocate { x: v.clone(), y: u.clone(), targets: (0..n).filter(|i| *i != q).map(NodeId).collect() }
    };
    let faults = (0..n).map(|i| if i > q { Fault::Byzantine(strategy.clone()) } else { Fault::Correct }).collect();
    let mut script: Vec<ScriptStep> = Vec::new();
    if silent {
        // Node 0 hears every correct v; the last correct node hears u first.
        script.extend((1..=2 * f).map(|i| deliver(i, 0, &v)));
        script.extend((2 * f + 1..q).map(|i| deliver(i, q, &u)));
        script.extend((0..=2 * f).map(|i| deliver(i, q, &v)));
    } else {
        script.extend((1..=2 * f).map(|i| deliver(i, 0, &v)));
        script.extend(byz.iter().map(|&b| deliver(b, 0, &v)));
        script.extend((2 * f + 1..q).map(|i| deliver(i, q, &u)));
        script.extend(byz.iter().map(|&b| deliver(b, q, &u)));
        script.extend((0..=f).map(|i| deliver(i, q, &v)));
    }
    let cfg = OptimizerConfig::new(n, f, FullValue::bare(v.clone()), FailureModel::ByzantineClassical);
    let name = if silent { format!("figure2-silent-f{f}") } else { format!("figure2-f{f}") };
    let scn = Scenario {
        name,
        initial_values: inputs(&vals),
        faults,
        schedule: Schedule::Scripted(script),
        ..Scenario::new("", cfg, &[])
    };
    scn.validate()?;
    let expected = if silent { Expectation::AllDecide(v) } else { Expectation::MixedPathsDecide(v) };
    Ok(NamedScenario::new(scn, expected))
}

/// External-validity worst case, `n = 3f + 1`: `f + 1` correct v-nodes,
/// `f` correct u-nodes, `f` Byzantine nodes sending v to everyone except
/// the last correct node.
pub fn figure3_external(f: usize) -> Result<NamedScenario, simnet::SimError> {
    degenerate(f)?;
    let n = 3 * f + 1;
    let q = 2 * f;
    let (v, u) = (v(), u());
    let vals: Vec<&ValuePayload> = (0..n).map(|i| if i <= f || i > q { &v } else { &u }).collect();
    let strategy =
        ByzantineStrategy::Equivocate { x: v.clone(), y: u.clone(), targets: (0..n).filter(|i| *i != q).map(NodeId).collect() };
    let faults = (0..n).map(|i| if i > q { Fault::Byzantine(strategy.clone()) } else { Fault::Correct }).collect();
    let byz: Vec<usize> = (q + 1..n).collect();
    let mut script: Vec<ScriptStep> = (1..=f).map(|i| deliver(i, 0, &v)).collect();
    script.extend(byz.iter().map(|&b| deliver(b, 0, &v)));
    script.extend((f + 1..q).map(|i| deliver(i, q, &u)));
    script.extend(byz.iter().map(|&b| deliver(b, q, &u)));
    script.push(deliver(0, q, &v));
    let cfg = OptimizerConfig::new(n, f, FullValue::bare(v.clone()), FailureModel::ByzantineExternal);
    let scn = Scenario {
        name: format!("figure3-f{f}"),
        initial_values: inputs(&vals),
        faults,
        schedule: Schedule::Scripted(script),
        ..Scenario::new("", cfg, &[])
    };
    scn.validate()?;
    Ok(NamedScenario::new(scn, Expectation::MixedPathsDecide(v)))
}

/// External validity with v invalid. Correct nodes only hold the valid
/// value u; the Byzantine nodes push v. The last correct node sees the
/// Byzantine v but keeps its own value.
pub fn figure3_invalid(f: usize) -> Result<NamedScenario, simnet::SimError> {
    let mut base = figure3_external(f)?.scenario;
    let n = base.n();
    let q = 2 * f;
    let u = u();
    for i in 0..=q {
        base.initial_values[i] = FullValue::bare(u.clone());
    }
    let mut script: Vec<ScriptStep> = (q + 1..n).map(|b| deliver(b, q, &v())).collect();
    script.extend((0..f).map(|i| deliver(i, q, &u)));
    for fault in base.faults.iter_mut().skip(q + 1) {
        *fault = Fault::Byzantine(ByzantineStrategy::Equivocate { x: v(), y: v(), targets: BTreeSet::new() });
    }
    base.validity = ValidityTable::new().with(v(), false);
    base.name = format!("figure3-invalid-f{f}");
    base.schedule = Schedule::Scripted(script);
    base.validate()?;
    Ok(NamedScenario::new(base, Expectation::AllDecide(u)))
}

/// The three executions of the lower-bound argument at `n = 3f + 1`,
/// against a classical-validity optimizer that adopts on `n - 3f` copies.
pub fn lower_bound_sigma(f: usize) -> Result<[NamedScenario; 3], simnet::SimError> {
    degenerate(f)?;
    let n = 3 * f + 1;
    let (v, u) = (v(), u());
    let mut cfg = OptimizerConfig::new(n, f, FullValue::bare(v.clone()), FailureModel::ByzantineClassical);
    cfg.straw_man = true;
    cfg.criteria = CriteriaSelection::MinCount(n - 3 * f);
    let byz: Vec<usize> = (2 * f + 1..n).collect();
    let p2 = 2 * f;

    // sigma1: every correct node starts with v, Byzantine nodes behave as
    // honest v-nodes. Node 0 decides after hearing nodes 1..=f and the
    // Byzantine nodes.
    let mut s1_script: Vec<ScriptStep> = (1..=f).map(|i| deliver(i, 0, &v)).collect();
    s1_script.extend(byz.iter().map(|&b| deliver(b, 0, &v)));
    let s1 = Scenario {
        name: format!("sigma1-f{f}"),
        initial_values: inputs(&vec![&v; n]),
        faults: (0..n).map(|i| if i > p2 { Fault::Byzantine(ByzantineStrategy::MimicHonest(v.clone())) } else { Fault::Correct }).collect(),
        schedule: Schedule::Scripted(s1_script.clone()),
        ..Scenario::new("", cfg.clone(), &[])
    };

    // sigma2: nodes f+1..=2f start with u. Byzantine nodes replay sigma1 to
    // node 0's side and act as honest u-nodes toward the rest. Node 2f hears
    // the u side plus one v.
    let s2_vals: Vec<&ValuePayload> = (0..n).map(|i| if i <= f { &v } else { &u }).collect();
    let side: BTreeSet<NodeId> = (0..=f).map(NodeId).collect();
    let mut s2_script = s1_script.clone();
    s2_script.extend((f + 1..p2).map(|i| deliver(i, p2, &u)));
    s2_script.extend(byz.iter().map(|&b| deliver(b, p2, &u)));
    s2_script.push(deliver(f, p2, &v));
    let s2 = Scenario {
        name: format!("sigma2-f{f}"),
        initial_values: inputs(&s2_vals),
        faults: (0..n)
            .map(|i| {
                if i > p2 {
                    Fault::Byzantine(ByzantineStrategy::Equivocate { x: v.clone(), y: u.clone(), targets: side.clone() })
                } else {
                    Fault::Correct
                }
            })
            .collect(),
        schedule: Schedule::Scripted(s2_script),
        ..Scenario::new("", cfg.clone(), &[])
    };

    let s3 = sigma3_scenario(cfg, f, format!("sigma3-f{f}"));
    Ok([
        NamedScenario::new(s1, Expectation::AllDecide(v.clone())),
        NamedScenario::new(s2, Expectation::AllDecide(v)),
        NamedScenario::new(s3, Expectation::ViolationExpected("validity".into())),
    ])
}

/// sigma3's adversary: nodes `1..=f` are Byzantine and act as honest
/// v-nodes, every correct node starts with u. Each correct node's quorum
/// contains exactly one Byzantine v.
fn sigma3_scenario(cfg: OptimizerConfig, f: usize, name: String) -> Scenario {
    let n = cfg.n;
    let (v, u) = (v(), u());
    let correct: Vec<usize> = (0..n).filter(|i| *i == 0 || *i > f).collect();
    let quorum = cfg.quorum();
    let mut script = Vec::new();
    for &r in &correct {
        script.push(deliver(1, r, &v));
        for &s in correct.iter().filter(|s| **s != r).take(quorum - 2) {
            script.push(deliver(s, r, &u));
        }
    }
    let vals: Vec<&ValuePayload> = (0..n).map(|i| if (1..=f).contains(&i) { &v } else { &u }).collect();
    Scenario {
        name,
        initial_values: inputs(&vals),
        faults: (0..n)
            .map(|i| if (1..=f).contains(&i) { Fault::Byzantine(ByzantineStrategy::MimicHonest(v.clone())) } else { Fault::Correct })
            .collect(),
        schedule: Schedule::Scripted(script),
        ..Scenario::new("", cfg, &[])
    }
}

/// sigma3's adversary against a correctly bounded classical optimizer
/// (`n = 4f + 1`, adoption on `f + 1` copies), explored exhaustively.
pub fn sigma3_correct_bound(f: usize) -> Result<NamedScenario, simnet::SimError> {
    degenerate(f)?;
    let n = 4 * f + 1;
    let cfg = OptimizerConfig::new(n, f, FullValue::bare(v()), FailureModel::ByzantineClassical);
    let mut scn = sigma3_scenario(cfg, f, format!("sigma3-bounded-f{f}"));
    scn.schedule = Schedule::Exhaustive { depth: 10_000 };
    scn.validate()?;
    Ok(NamedScenario::new(scn, Expectation::AllDecide(u())))
}

/// Every named scenario the CLI and the golden suite know about.
pub fn by_name(name: &str, f: usize) -> Result<Vec<NamedScenario>, simnet::SimError> {
    Ok(match name {
        "figure1" => vec![figure1_benign(f)?],
        "figure2" => vec![figure2_classical(f)?],
        "figure2-silent" => vec![figure2_silent(f)?],
        "figure3" => vec![figure3_external(f)?],
        "figure3-invalid" => vec![figure3_invalid(f)?],
        "sigma" => lower_bound_sigma(f)?.into(),
        "sigma-bounded" => vec![sigma3_correct_bound(f)?],
        other => return Err(simnet::SimError::ScenarioInvalid(format!("unknown scenario {other:?}"))),
    })
}

pub const NAMES: &[&str] = &["figure1", "figure2", "figure2-silent", "figure3", "figure3-invalid", "sigma", "sigma-bounded"];

/// Checks an outcome against an expectation, describing any mismatch.
pub fn check_expectation(expected: &Expectation, out: &RunOutcome) -> Result<(), String> {
    let decided: Vec<_> = out.decisions().collect();
    let correct = out.nodes.iter().filter(|r| r.correct).count();
    let all_decide = |x: &ValuePayload| -> Result<(), String> {
        if !out.violations.is_empty() {
            return Err(format!("unexpected violations: {:?}", out.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>()));
        }
        if decided.len() != correct || decided.iter().any(|d| d.value != *x) {
            return Err(format!("expected every correct node to decide {x}, got {decided:?}"));
        }
        Ok(())
    };
    match expected {
        Expectation::AllDecide(x) => all_decide(x),
        Expectation::MixedPathsDecide(x) => {
            all_decide(x)?;
            if out.fast_count() == 0 || out.base_count() == 0 {
                return Err(format!("expected mixed paths, got {} fast and {} base", out.fast_count(), out.base_count()));
            }
            Ok(())
        }
        Expectation::ViolationExpected(kind) => {
            if out.violations.iter().any(|v| v.kind() == kind) {
                Ok(())
            } else {
                Err(format!("expected a {kind} violation, got {:?}", out.violations))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputPattern {
    /// Every node starts with the preferred value.
    AllPreferred,
    /// Each node independently starts with the preferred or the other value.
    Mixed(ValuePayload),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FaultMix {
    None,
    /// Up to `f` nodes crashed before the first event.
    CrashFromStart,
    /// Up to `f` nodes crashing at random points.
    Crashes,
    /// Up to `f` Byzantine nodes drawing from the given strategies.
    Byzantine(Vec<ByzantineStrategy>),
}

/// Recipe for a randomized campaign.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CampaignSpec {
    pub cfg: OptimizerConfig,
    pub inputs: InputPattern,
    pub faults: FaultMix,
    pub validity: ValidityTable,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CampaignReport {
    pub runs: u64,
    pub errors: u64,
    pub violating_runs: u64,
    pub violations_by_kind: BTreeMap<String, u64>,
    /// Runs where every correct node decided on the fast path.
    pub fast_runs: u64,
    /// Fast runs that also used one round and no base traffic.
    pub one_round_runs: u64,
    pub fast_decisions: u64,
    pub base_decisions: u64,
    pub max_rounds: u32,
    pub mean_rounds: f64,
    pub messages: BTreeMap<String, u64>,
    pub bytes: BTreeMap<String, u64>,
    /// Highest ProposeToBase count of any non-Byzantine node in any run.
    pub max_proposes: u32,
    /// Highest Decide count of any non-Byzantine node in any run.
    pub max_decides: u32,
    /// Correct nodes that did not decide exactly once.
    pub decide_count_mismatches: u64,
}

impl CampaignReport {
    pub fn fast_path_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.fast_runs as f64 / self.runs as f64
        }
    }

    fn absorb(&mut self, res: &Result<RunOutcome, simnet::SimError>, rounds_sum: &mut u64, decisions: &mut u64) {
        self.runs += 1;
        let out = match res {
            Ok(o) => o,
            Err(_) => {
                self.errors += 1;
                return;
            }
        };
        if !out.violations.is_empty() {
            self.violating_runs += 1;
            for v in &out.violations {
                *self.violations_by_kind.entry(v.kind().to_string()).or_default() += 1;
            }
        }
        let correct: Vec<_> = out.nodes.iter().filter(|r| r.correct).collect();
        let all_fast = correct.iter().all(|r| r.decision.as_ref().is_some_and(|d| d.path == DecisionPath::Fast));
        if all_fast {
            self.fast_runs += 1;
            if correct.iter().all(|r| r.decision.as_ref().is_some_and(|d| d.rounds == 1)) && out.counters.base.messages == 0 {
                self.one_round_runs += 1;
            }
        }
        for d in out.decisions() {
            match d.path {
                DecisionPath::Fast => self.fast_decisions += 1,
                DecisionPath::Base => self.base_decisions += 1,
            }
            self.max_rounds = self.max_rounds.max(d.rounds);
            *rounds_sum += d.rounds as u64;
            *decisions += 1;
        }
        for r in out.nodes.iter().filter(|r| !r.byzantine) {
            self.max_proposes = self.max_proposes.max(r.proposes);
            self.max_decides = self.max_decides.max(r.decides);
        }
        self.decide_count_mismatches += correct.iter().filter(|r| r.decides != 1).count() as u64;
        for (kind, c) in [("val", out.counters.val), ("full", out.counters.full), ("base", out.counters.base)] {
            *self.messages.entry(kind.into()).or_default() += c.messages;
            *self.bytes.entry(kind.into()).or_default() += c.total_bytes();
        }
    }
}

fn aggregate(results: &[Result<RunOutcome, simnet::SimError>]) -> CampaignReport {
    let mut report = CampaignReport::default();
    let (mut rounds, mut decisions) = (0u64, 0u64);
    for r in results {
        report.absorb(r, &mut rounds, &mut decisions);
    }
    if decisions > 0 {
        report.mean_rounds = rounds as f64 / decisions as f64;
    }
    report
}

fn run_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Builds the scenario of run `i` of a campaign.
pub fn campaign_scenario(spec: &CampaignSpec, seed: u64, i: u64) -> Scenario {
    let s = run_seed(seed, i);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let cfg = &spec.cfg;
    let n = cfg.n;
    let values: Vec<ValuePayload> = (0..n)
        .map(|_| match &spec.inputs {
            InputPattern::AllPreferred => cfg.preferred.val.clone(),
            InputPattern::Mixed(other) => {
                if rng.gen_bool(0.5) {
                    cfg.preferred.val.clone()
                } else {
                    other.clone()
                }
            }
        })
        .collect();
    let mut scn = Scenario::new(format!("campaign-{i}"), cfg.clone(), &values);
    scn.initial_values = values
        .iter()
        .map(|x| if *x == cfg.preferred.val { cfg.preferred.clone() } else { FullValue::bare(x.clone()) })
        .collect();
    scn.validity = spec.validity.clone();
    scn.schedule = Schedule::Seeded(s);
    let k = if matches!(spec.faults, FaultMix::None) { 0 } else { rng.gen_range(0..=cfg.f) };
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    for &i in ids.iter().take(k) {
        scn.faults[i] = match &spec.faults {
            FaultMix::None => Fault::Correct,
            FaultMix::CrashFromStart => Fault::CrashAt(0),
            FaultMix::Crashes => Fault::CrashAt(rng.gen_range(0..(4 * n * n) as u64)),
            FaultMix::Byzantine(strategies) => {
                let mut st = strategies[rng.gen_range(0..strategies.len())].clone();
                if let ByzantineStrategy::Equivocate { targets, .. } = &mut st {
                    *targets = (0..n).filter(|_| rng.gen_bool(0.5)).map(NodeId).collect();
                }
                Fault::Byzantine(st)
            }
        };
    }
    scn
}

/// Seeded batch of randomized inputs, faults and schedules.
pub fn random_campaign(spec: &CampaignSpec, runs: u64, seed: u64, mode: Mode) -> CampaignReport {
    let budget = simnet::event_budget_from_env();
    let results = par::map_range(mode, runs, |i| {
        let scn = campaign_scenario(spec, seed, i);
        simnet::run_with(&scn, RunOptions { trace: false, budget })
    });
    aggregate(&results)
}

/// Runs one scenario under `runs` different schedule seeds.
pub fn seed_campaign(scn: &Scenario, runs: u64, seed: u64, mode: Mode) -> CampaignReport {
    let budget = simnet::event_budget_from_env();
    let results = par::map_range(mode, runs, |i| {
        let mut s = scn.clone();
        s.schedule = Schedule::Seeded(run_seed(seed, i));
        simnet::run_with(&s, RunOptions { trace: false, budget })
    });
    aggregate(&results)
}
