use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::Serialize;
use thiserror::Error;

use super::envelope::MessageKind;
use super::invariants::Violation;
use super::node::Stage;
use super::scenario::{Fault, Scenario, Schedule, ScriptStep};
use super::sim::{Choice, Simulator};
use super::SimError;
use crate::types::{NodeId, Variant};

#[derive(Clone, Copy, Debug)]
pub struct ExploreOptions {
    /// Longest schedule explored, counted in adversary choices.
    pub depth: usize,
    /// Distinct states visited before giving up.
    pub max_states: u64,
    /// At every base branch point also run the concrete protocol and check
    /// its decision against the oracle's legal set.
    pub check_concrete: bool,
    /// While some correct node is still collecting first-round votes, only
    /// explore deliveries of first-round values to the lowest such node.
    /// Applies to the proof-oblivious optimizer without crash timing or the
    /// timeout mode, where every other pending step commutes with those.
    pub partial_order: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { depth: 1_000, max_states: 5_000_000, check_concrete: false, partial_order: true }
    }
}

impl ExploreOptions {
    pub fn for_scenario(scn: &Scenario) -> Self {
        let mut o = Self::default();
        if let Schedule::Exhaustive { depth } = scn.schedule {
            o.depth = depth;
        }
        o
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub steps: Vec<ScriptStep>,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExplorationReport {
    pub scenario: String,
    pub states: u64,
    pub transitions: u64,
    pub leaves: u64,
    pub violating_leaves: u64,
    pub violations_by_kind: BTreeMap<String, u64>,
    /// Leaves where some correct node decided on the fast path.
    pub fast_leaves: u64,
    /// Leaves where some correct node decided through the base.
    pub base_leaves: u64,
    pub mixed_leaves: u64,
    pub max_depth: usize,
    /// Branches cut by the depth bound.
    pub truncated: u64,
    pub concrete_checks: u64,
    pub concrete_mismatches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl ExplorationReport {
    pub fn violation_count(&self) -> u64 {
        self.violating_leaves
    }

    pub fn is_clean(&self) -> bool {
        self.violating_leaves == 0 && self.concrete_mismatches == 0
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("exploration budget exceeded after {} states", .0.states)]
    BudgetExceeded(Box<ExplorationReport>),
    #[error(transparent)]
    Sim(#[from] SimError),
}

struct Explorer {
    opts: ExploreOptions,
    reduce: bool,
    visited: HashSet<u128>,
    report: ExplorationReport,
    over_budget: bool,
    crash_times: Vec<u64>,
    leaf_keys: Option<BTreeSet<u128>>,
}

/// Enumerates every schedule and every legal base decision, evaluating the
/// invariants on each quiescent leaf.
///
/// States are deduplicated by a canonical hash that ignores sequence
/// numbers, delivery order inside vote sets and state that can no longer
/// matter. Deliveries that cannot influence the recipient are applied
/// eagerly when no crash is still pending.
pub fn explore(scn: &Scenario, opts: ExploreOptions) -> Result<ExplorationReport, ExploreError> {
    explore_inner(scn, opts, false).map(|(r, _)| r)
}

/// Like [`explore`], also returning digests of the distinct quiescent states reached.
pub fn explore_leaf_keys(scn: &Scenario, opts: ExploreOptions) -> Result<(ExplorationReport, BTreeSet<u128>), ExploreError> {
    explore_inner(scn, opts, true)
}

fn explore_inner(
    scn: &Scenario,
    opts: ExploreOptions,
    keep_leaves: bool,
) -> Result<(ExplorationReport, BTreeSet<u128>), ExploreError> {
    let sim = Simulator::new(scn, false)?;
    let crash_times: Vec<u64> = scn
        .faults
        .iter()
        .filter_map(|f| match f {
            Fault::CrashAt(k) => Some(*k),
            _ => None,
        })
        .collect();
    let report = ExplorationReport { scenario: scn.name.clone(), ..Default::default() };
    let leaf_keys = keep_leaves.then(BTreeSet::new);
    let crash_pending = crash_times.iter().any(|k| *k >= sim.state.event_index);
    let reduce = opts.partial_order
        && !crash_pending
        && !scn.cfg.is_sync_variant()
        && scn.cfg.variant == Variant::ProofOblivious;
    let mut ex = Explorer { opts, reduce, visited: HashSet::new(), report, over_budget: false, crash_times, leaf_keys };
    ex.dfs(sim, 0)?;
    if ex.over_budget || ex.report.truncated > 0 {
        return Err(ExploreError::BudgetExceeded(Box::new(ex.report)));
    }
    Ok((ex.report, ex.leaf_keys.unwrap_or_default()))
}

impl Explorer {
    fn crash_pending(&self, sim: &Simulator<'_>) -> bool {
        self.crash_times.iter().any(|k| *k >= sim.state.event_index)
    }

    /// Lowest correct node still collecting first-round votes with one in
    /// flight. Its value deliveries form a persistent set: the base cannot
    /// become ready before it leaves collection, no new values are ever
    /// sent, and announcements reaching it commute with value deliveries.
    fn collecting(&self, sim: &Simulator<'_>) -> Option<NodeId> {
        let scn = sim.scenario();
        (0..scn.n()).map(NodeId).find(|&r| {
            scn.faults[r.index()].is_correct()
                && !sim.state.nodes[r.index()].crashed
                && sim.state.nodes[r.index()].machine.honest().is_some_and(|h| h.stage() == Stage::Collecting)
                && sim.state.pending.iter().any(|e| e.to == r && e.kind() == MessageKind::Val)
        })
    }

    fn dfs(&mut self, mut sim: Simulator<'_>, depth: usize) -> Result<(), SimError> {
        if self.over_budget {
            return Ok(());
        }
        if !self.crash_pending(&sim) {
            while let Some(seq) = sim.inert_delivery() {
                sim.apply(&Choice::Deliver(seq))?;
            }
        }
        if !self.visited.insert(state_key(&sim, self.crash_pending(&sim))) {
            return Ok(());
        }
        self.report.states += 1;
        if self.report.states > self.opts.max_states {
            self.over_budget = true;
            return Ok(());
        }
        self.report.max_depth = self.report.max_depth.max(depth);
        let mut enabled = sim.enabled();
        if self.reduce {
            if let Some(r) = self.collecting(&sim) {
                enabled.retain(|c| match c {
                    Choice::Deliver(seq) => sim
                        .state
                        .pending
                        .iter()
                        .any(|e| e.seq == *seq && e.to == r && e.kind() == MessageKind::Val),
                    _ => false,
                });
            }
        }
        if enabled.is_empty() {
            record_leaf(&mut self.report, self.leaf_keys.as_mut(), &sim);
            return Ok(());
        }
        if depth >= self.opts.depth {
            self.report.truncated += 1;
            return Ok(());
        }
        if self.opts.check_concrete && enabled.iter().any(|c| matches!(c, Choice::BaseDecide(_))) {
            check_concrete(&mut self.report, &sim);
        }
        for c in &enabled {
            let mut next = sim.clone();
            next.apply(c)?;
            self.report.transitions += 1;
            self.dfs(next, depth + 1)?;
        }
        Ok(())
    }
}

pub(super) fn check_concrete(r: &mut ExplorationReport, sim: &Simulator<'_>) {
    r.concrete_checks += 1;
    if !sim.concrete_decision_is_legal() {
        r.concrete_mismatches += 1;
    }
}

pub(super) fn record_leaf(r: &mut ExplorationReport, keys: Option<&mut BTreeSet<u128>>, sim: &Simulator<'_>) {
    r.leaves += 1;
    if let Some(keys) = keys {
        keys.insert(state_key(sim, false));
    }
    let reports = sim.node_reports();
    let decided = reports.iter().filter(|n| n.correct).filter_map(|n| n.decision.as_ref());
    let (mut fast, mut base) = (false, false);
    for d in decided {
        match d.path {
            crate::optimizer::DecisionPath::Fast => fast = true,
            crate::optimizer::DecisionPath::Base => base = true,
        }
    }
    r.fast_leaves += fast as u64;
    r.base_leaves += base as u64;
    r.mixed_leaves += (fast && base) as u64;
    let violations = sim.violations();
    if violations.is_empty() {
        return;
    }
    r.violating_leaves += 1;
    for v in &violations {
        *r.violations_by_kind.entry(v.kind().to_string()).or_default() += 1;
    }
    let shorter = r.witness.as_ref().is_none_or(|w| sim.steps().len() < w.steps.len());
    if shorter {
        r.witness = Some(Witness { steps: sim.steps().to_vec(), violations });
    }
}

/// 128-bit digest of everything that can influence future behavior.
pub(super) fn state_key(sim: &Simulator<'_>, with_index: bool) -> u128 {
    let mut a = DefaultHasher::new();
    let mut b = DefaultHasher::new();
    0x5eed_u64.hash(&mut b);
    let st = &sim.state;
    let mut errors: Vec<u64> = st
        .errors
        .iter()
        .map(|e| {
            let mut h = DefaultHasher::new();
            e.hash(&mut h);
            h.finish()
        })
        .collect();
    errors.sort_unstable();
    let mut pending: Vec<_> = st.pending.iter().map(|e| (e.from, e.to, &e.msg)).collect();
    pending.sort();
    for h in [&mut a, &mut b] {
        for slot in &st.nodes {
            slot.machine.hash_behavior(h);
            slot.crashed.hash(h);
            slot.proposes.hash(h);
            slot.decides.hash(h);
            slot.base_notified.hash(h);
            slot.decision.as_ref().map(|d| (&d.value, d.path)).hash(h);
        }
        pending.hash(h);
        st.oracle.hash(h);
        st.concrete_decisions.hash(h);
        errors.hash(h);
        if with_index {
            st.event_index.hash(h);
        }
    }
    ((a.finish() as u128) << 64) | b.finish() as u128
}

/// Explores many scenarios, in parallel when enabled.
pub fn explore_many(scns: &[Scenario], opts: ExploreOptions) -> Vec<Result<ExplorationReport, ExploreError>> {
    crate::par::map(scns, |s| explore(s, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{u, v};
    use crate::simnet::{Fault, Schedule};
    use crate::types::{FailureModel, FullValue, OptimizerConfig, ValuePayload};

    fn benign3(vals: &[ValuePayload]) -> Scenario {
        let mut s = Scenario::new("t", OptimizerConfig::new(3, 1, FullValue::bare(v()), FailureModel::Benign), vals);
        s.schedule = Schedule::Exhaustive { depth: 1_000 };
        s
    }

    #[test]
    fn unanimous_preferred_inputs_only_decide_fast() {
        let s = benign3(&[v(), v(), v()]);
        let r = explore(&s, ExploreOptions::for_scenario(&s)).unwrap();
        assert!(r.is_clean());
        assert!(r.leaves > 0);
        assert_eq!(r.fast_leaves, r.leaves);
        assert_eq!(r.base_leaves, 0);
    }

    #[test]
    fn state_budget_is_reported() {
        let s = benign3(&[v(), u(), v()]);
        let opts = ExploreOptions { max_states: 5, ..ExploreOptions::for_scenario(&s) };
        assert!(matches!(explore(&s, opts), Err(ExploreError::BudgetExceeded(_))));
    }

    #[test]
    fn straw_man_violation_comes_with_a_replayable_witness() {
        let ns = crate::scenarios::lower_bound_sigma(1).unwrap()[2].clone();
        let mut s = ns.scenario;
        s.schedule = Schedule::Exhaustive { depth: 1_000 };
        let r = explore(&s, ExploreOptions::for_scenario(&s)).unwrap();
        assert!(r.violating_leaves > 0);
        let w = r.witness.expect("witness");
        let mut replay = s.clone();
        replay.schedule = Schedule::Scripted(w.steps.clone());
        let out = crate::simnet::run(&replay).unwrap();
        assert!(!out.violations.is_empty());
    }

    #[test]
    fn crash_points_only_widen_the_search() {
        let clean = benign3(&[v(), u(), v()]);
        let mut crashed = clean.clone();
        crashed.faults[1] = Fault::CrashAt(2);
        let a = explore(&clean, ExploreOptions::for_scenario(&clean)).unwrap();
        let b = explore(&crashed, ExploreOptions::for_scenario(&crashed)).unwrap();
        assert!(a.is_clean() && b.is_clean());
        assert!(b.leaves > 0);
    }
}
