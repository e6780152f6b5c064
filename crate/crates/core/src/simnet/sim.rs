use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::byzantine::{byzantine_emit, equivocate_round, expand_sends, full_for, scripted_outgoing, EmitContext};
use super::envelope::{BaseMessage, Envelope, MessageKind, Outgoing, WireMessage};
use super::invariants::{self, NodeReport, Violation};
use super::node::{Honest, Machine, Stage};
use super::scenario::{BaseMode, ByzantineStrategy, Fault, Scenario, Schedule, ScriptStep};
use super::trace::{ActionRecord, Counters, EventRecord, Meta, Trace, TraceLine};
use super::SimError;
use crate::base::{ConcreteNode, OracleInstance, ValidityFlavor};
use crate::optimizer::{DecisionPath, DecisionRecord, NodeAction, NodeError};
use crate::types::{FailureModel, NodeId, ValuePayload};

pub const DEFAULT_EVENT_BUDGET: u64 = 1_000_000;

/// Event budget from `SIM_EVENT_BUDGET`, or the default.
pub fn event_budget_from_env() -> u64 {
    std::env::var("SIM_EVENT_BUDGET")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_EVENT_BUDGET)
}

/// One adversary decision.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Choice {
    Deliver(u64),
    /// Discard an in-flight envelope of a crashed sender.
    Drop(u64),
    BaseDecide(ValuePayload),
    /// Run the concrete base protocol in synchronous rounds.
    SyncBase,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeSlot {
    pub machine: Machine,
    pub crashed: bool,
    pub depth: u32,
    pub proposal_depth: Option<u32>,
    pub proposes: u32,
    pub decides: u32,
    pub decision: Option<DecisionRecord>,
    pub base_notified: bool,
    pub sent: u32,
}

/// Everything that evolves during a run.
#[derive(Clone, Debug)]
pub struct SimState {
    pub nodes: Vec<NodeSlot>,
    /// In-flight envelopes, ascending by `seq`.
    pub pending: Vec<Envelope>,
    pub next_seq: u64,
    pub event_index: u64,
    pub oracle: OracleInstance,
    pub base_depth: u32,
    pub concrete_decisions: BTreeMap<NodeId, ValuePayload>,
    pub counters: Counters,
    pub errors: Vec<Violation>,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub trace: bool,
    pub budget: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { trace: true, budget: DEFAULT_EVENT_BUDGET }
    }
}

/// Result of driving a scenario to quiescence.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub nodes: Vec<NodeReport>,
    pub counters: Counters,
    pub violations: Vec<Violation>,
    pub events: u64,
    /// The schedule actually taken, replayable as a script.
    pub steps: Vec<ScriptStep>,
    pub trace: Option<Trace>,
}

impl RunOutcome {
    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.nodes.iter().filter(|r| r.correct).filter_map(|r| r.decision.as_ref())
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn fast_count(&self) -> usize {
        self.decisions().filter(|d| d.path == DecisionPath::Fast).count()
    }

    pub fn base_count(&self) -> usize {
        self.decisions().filter(|d| d.path == DecisionPath::Base).count()
    }
}

#[derive(Clone, Debug)]
pub struct Simulator<'s> {
    scn: &'s Scenario,
    pub state: SimState,
    trace: Option<Vec<TraceLine>>,
    steps: Vec<ScriptStep>,
}

impl<'s> Simulator<'s> {
    pub fn new(scn: &'s Scenario, tracing: bool) -> Result<Self, SimError> {
        scn.validate()?;
        let cfg = &scn.cfg;
        let nodes = (0..cfg.n)
            .map(|i| {
                let id = NodeId(i);
                let machine = match &scn.faults[i] {
                    Fault::Byzantine(strategy) => Machine::Byzantine {
                        mimic: match strategy {
                            ByzantineStrategy::MimicHonest(w) => Some(Honest::new(cfg, id, full_for(cfg, w))),
                            _ => None,
                        },
                        strategy: strategy.clone(),
                    },
                    _ => Machine::Honest(Honest::new(cfg, id, scn.initial_values[i].clone())),
                };
                NodeSlot {
                    machine,
                    crashed: false,
                    depth: 0,
                    proposal_depth: None,
                    proposes: 0,
                    decides: 0,
                    decision: None,
                    base_notified: false,
                    sent: 0,
                }
            })
            .collect();
        let trace = tracing.then(|| {
            vec![TraceLine::Meta(Meta {
                name: scn.name.clone(),
                n: cfg.n,
                f: cfg.f,
                model: enum_text(&cfg.model),
                variant: enum_text(&cfg.variant),
                timeout_mode: cfg.is_sync_variant(),
                base: enum_text(&scn.base),
                straw_man: cfg.straw_man,
                schedule: schedule_text(&scn.schedule),
            })]
        });
        let mut sim = Simulator {
            scn,
            state: SimState {
                nodes,
                pending: Vec::new(),
                next_seq: 0,
                event_index: 0,
                oracle: OracleInstance::new(),
                base_depth: 0,
                concrete_decisions: BTreeMap::new(),
                counters: Counters::default(),
                errors: Vec::new(),
            },
            trace,
            steps: Vec::new(),
        };
        sim.crash_due();
        for i in 0..cfg.n {
            if !sim.state.nodes[i].crashed {
                sim.start_node(NodeId(i))?;
                sim.crash_due();
            }
        }
        Ok(sim)
    }

    pub fn scenario(&self) -> &'s Scenario {
        self.scn
    }

    pub fn steps(&self) -> &[ScriptStep] {
        &self.steps
    }

    fn flavor(&self) -> ValidityFlavor {
        ValidityFlavor::for_model(self.scn.cfg.model, self.scn.cfg.binary_domain)
    }

    fn record(&mut self, node: Option<NodeId>, event: EventRecord, actions: Vec<ActionRecord>) {
        if let Some(t) = &mut self.trace {
            t.push(TraceLine::Event { index: self.state.event_index, node: node.map(|n| n.0), event, actions });
        }
        self.state.event_index += 1;
    }

    fn crash_due(&mut self) {
        loop {
            let idx = self.state.event_index;
            let due = (0..self.scn.n()).find(|&i| {
                !self.state.nodes[i].crashed && matches!(self.scn.faults[i], Fault::CrashAt(k) if k <= idx)
            });
            let Some(i) = due else { break };
            self.state.nodes[i].crashed = true;
            self.state.pending.retain(|e| e.to.0 != i);
            self.record(Some(NodeId(i)), EventRecord::Crash, Vec::new());
        }
    }

    fn send(&mut self, out: Outgoing, depth: u32, actions: &mut Vec<ActionRecord>) {
        self.state.counters.record(&out.msg);
        record_send(actions, &out);
        let origin = self.state.nodes[out.from.0].sent;
        self.state.nodes[out.from.0].sent += 1;
        if self.state.nodes[out.to.0].crashed {
            return;
        }
        let seq = self.state.next_seq;
        self.state.next_seq += 1;
        self.state.pending.push(Envelope {
            seq,
            from: out.from,
            to: out.to,
            msg: out.msg,
            origin,
            send_index: self.state.event_index,
            depth,
        });
    }

    fn start_node(&mut self, id: NodeId) -> Result<(), SimError> {
        let cfg = &self.scn.cfg;
        let mut actions = Vec::new();
        let slot = &mut self.state.nodes[id.0];
        match &mut slot.machine {
            Machine::Honest(h) => {
                let res = h.start(cfg, &self.scn.validity);
                self.apply_actions(id, res, 1, &mut actions);
                if cfg.is_sync_variant() {
                    let out = Outgoing { from: id, to: id, msg: WireMessage::Timer };
                    self.send(out, 0, &mut actions);
                }
            }
            Machine::Byzantine { strategy, mimic } => {
                if let Some(h) = mimic {
                    let res = h.start(cfg, &self.scn.validity);
                    self.apply_actions(id, res, 1, &mut actions);
                } else if let ByzantineStrategy::ArbitraryScript(sends) = strategy.clone() {
                    for s in sends.iter().filter(|s| s.from == id) {
                        let out = scripted_outgoing(cfg, s)?;
                        self.send(out, 1, &mut actions);
                    }
                    self.record(Some(id), EventRecord::Start, actions);
                    // Forged sends never reach the network.
                    for s in sends.iter().filter(|s| s.from != id) {
                        self.record(Some(id), EventRecord::Rejected { claimed_from: s.from.0, to: s.to.0 }, Vec::new());
                    }
                    return Ok(());
                } else {
                    let cx = EmitContext { cfg, valid: &self.scn.validity };
                    for out in byzantine_emit(id, &strategy.clone(), &cx)? {
                        self.send(out, 1, &mut actions);
                    }
                }
            }
        }
        self.record(Some(id), EventRecord::Start, actions);
        Ok(())
    }

    /// Executes a state machine's outputs. `trigger_depth` is the causal
    /// depth of the envelope that caused them.
    fn apply_actions(&mut self, id: NodeId, res: Result<Vec<NodeAction>, NodeError>, trigger_depth: u32, log: &mut Vec<ActionRecord>) {
        let acts = match res {
            Ok(a) => a,
            Err(e) => {
                log.push(ActionRecord::Error { message: e.to_string() });
                self.state.errors.push(match e {
                    NodeError::ConsistencyViolation { node, fast, base } => Violation::Consistency { node, fast, base },
                    other => Violation::Protocol { node: id, detail: other.to_string() },
                });
                return;
            }
        };
        let n = self.scn.n();
        let byzantine = self.scn.faults[id.0].is_byzantine();
        let correct = self.scn.faults[id.0].is_correct();
        let depth = self.state.nodes[id.0].depth + 1;
        for out in expand_sends(id, n, &acts) {
            self.send(out, depth, log);
        }
        for a in acts {
            match a {
                NodeAction::Broadcast(_) | NodeAction::SendTo(..) => {}
                NodeAction::ProposeToBase(v) => {
                    log.push(ActionRecord::Propose { value: v.val.to_text(), proof_bytes: v.proof().len() });
                    let slot = &mut self.state.nodes[id.0];
                    slot.proposes += 1;
                    slot.proposal_depth = Some(slot.depth);
                    if self.state.oracle.base_propose(id, v.clone(), correct).is_err() && !byzantine {
                        let proposals = self.state.nodes[id.0].proposes;
                        self.state.errors.push(Violation::JoinOnce { node: id, proposals });
                    }
                    for j in (0..n).map(NodeId).filter(|j| *j != id) {
                        let out = Outgoing { from: id, to: j, msg: WireMessage::Base(BaseMessage::Announce(v.val.clone())) };
                        self.send(out, depth, log);
                    }
                }
                NodeAction::Decide(value, path) => {
                    let slot = &mut self.state.nodes[id.0];
                    let rounds = match path {
                        DecisionPath::Fast => trigger_depth.max(1),
                        DecisionPath::Base => slot.depth,
                    };
                    log.push(ActionRecord::Decide { value: value.to_text(), path, rounds });
                    if byzantine {
                        continue;
                    }
                    slot.decides += 1;
                    if slot.decision.is_none() {
                        slot.decision = Some(DecisionRecord { node: id, value, path, event_index: self.state.event_index, rounds });
                    }
                }
            }
        }
    }

    fn is_participant(&self, i: usize) -> bool {
        !self.state.nodes[i].crashed && !self.scn.faults[i].is_byzantine()
    }

    /// Every live non-Byzantine node has proposed or fast-decided without
    /// joining, and someone proposed.
    pub fn base_ready(&self) -> bool {
        if self.state.oracle.decision().is_some() || self.state.oracle.proposals().is_empty() {
            return false;
        }
        (0..self.scn.n()).filter(|&i| self.is_participant(i)).all(|i| {
            self.state.oracle.has_proposed(NodeId(i))
                || self.state.nodes[i]
                    .machine
                    .honest()
                    .is_some_and(|h| h.stage() == Stage::FastDecided && !h.joined_base())
        })
    }

    fn timer_enabled(&self, e: &Envelope) -> bool {
        let Some(h) = self.state.nodes[e.to.0].machine.honest() else {
            return true;
        };
        if h.stage() != Stage::Collecting {
            return true;
        }
        h.vote_count() >= self.scn.cfg.quorum()
            && !self
                .state
                .pending
                .iter()
                .any(|p| p.to == e.to && matches!(p.kind(), MessageKind::Val | MessageKind::Full))
    }

    pub fn enabled(&self) -> Vec<Choice> {
        let mut out = Vec::new();
        if self.base_ready() {
            match self.scn.base {
                BaseMode::Oracle => {
                    if let Ok(legal) = self.state.oracle.legal_decisions(self.flavor(), &self.scn.validity) {
                        out.extend(legal.into_iter().map(Choice::BaseDecide));
                    }
                }
                BaseMode::Concrete => out.push(Choice::SyncBase),
            }
        }
        for e in &self.state.pending {
            if e.kind() == MessageKind::Timer && !self.timer_enabled(e) {
                continue;
            }
            out.push(Choice::Deliver(e.seq));
            if self.state.nodes[e.from.0].crashed {
                out.push(Choice::Drop(e.seq));
            }
        }
        out
    }

    /// An enabled delivery that cannot affect any future behavior.
    pub fn inert_delivery(&self) -> Option<u64> {
        self.state.pending.iter().find_map(|e| {
            let inert = match self.state.nodes[e.to.0].machine.honest() {
                Some(h) => h.is_inert(e.from, &e.msg),
                None => true,
            };
            (inert && (e.kind() != MessageKind::Timer || self.timer_enabled(e))).then_some(e.seq)
        })
    }

    fn take(&mut self, seq: u64) -> Result<Envelope, SimError> {
        let pos = self
            .state
            .pending
            .iter()
            .position(|e| e.seq == seq)
            .ok_or_else(|| SimError::ScenarioInvalid(format!("no pending envelope with seq {seq}")))?;
        Ok(self.state.pending.remove(pos))
    }

    pub fn step_of(&self, c: &Choice) -> ScriptStep {
        let pat = |seq: u64| self.state.pending.iter().find(|e| e.seq == seq).map(|e| (e.from, e.to, e.kind(), e.msg.key_value().cloned()));
        match c {
            Choice::Deliver(seq) => {
                let (from, to, kind, val) = pat(*seq).expect("choice refers to a pending envelope");
                ScriptStep::Deliver { from, to, kind, val }
            }
            Choice::Drop(seq) => {
                let (from, to, kind, val) = pat(*seq).expect("choice refers to a pending envelope");
                ScriptStep::Drop { from, to, kind, val }
            }
            Choice::BaseDecide(v) => ScriptStep::Base(v.clone()),
            Choice::SyncBase => ScriptStep::Base(self.scn.cfg.preferred.val.clone()),
        }
    }

    /// The enabled choice a script step designates: the oldest matching envelope.
    pub fn match_step(&self, step: &ScriptStep, enabled: &[Choice]) -> Option<Choice> {
        let matches = |e: &Envelope, from: &NodeId, to: &NodeId, kind: &MessageKind, val: &Option<ValuePayload>| {
            e.from == *from && e.to == *to && e.kind() == *kind && val.as_ref().is_none_or(|v| e.msg.key_value() == Some(v))
        };
        match step {
            ScriptStep::Deliver { from, to, kind, val } => self
                .state
                .pending
                .iter()
                .filter(|e| matches(e, from, to, kind, val))
                .map(|e| Choice::Deliver(e.seq))
                .find(|c| enabled.contains(c)),
            ScriptStep::Drop { from, to, kind, val } => self
                .state
                .pending
                .iter()
                .filter(|e| matches(e, from, to, kind, val))
                .map(|e| Choice::Drop(e.seq))
                .find(|c| enabled.contains(c)),
            ScriptStep::Base(v) => enabled
                .iter()
                .find(|c| match c {
                    Choice::BaseDecide(x) => x == v,
                    Choice::SyncBase => true,
                    _ => false,
                })
                .cloned(),
        }
    }

    pub fn apply(&mut self, c: &Choice) -> Result<(), SimError> {
        let step = self.step_of(c);
        match c {
            Choice::Deliver(seq) => {
                let e = self.take(*seq)?;
                self.deliver(e);
            }
            Choice::Drop(seq) => {
                let e = self.take(*seq)?;
                self.record(Some(e.to), EventRecord::drop(&e), Vec::new());
            }
            Choice::BaseDecide(v) => {
                let legal = self.state.oracle.legal_decisions(self.flavor(), &self.scn.validity)?;
                let choice = legal.iter().position(|x| x == v).ok_or(crate::base::BaseError::BadChoice {
                    choice: usize::MAX,
                    legal: legal.len(),
                })?;
                self.state.oracle.oracle_decide(self.flavor(), &self.scn.validity, choice)?;
                self.state.base_depth = self.state.nodes.iter().filter_map(|s| s.proposal_depth).max().unwrap_or(0) + 1;
                let legal = legal.iter().map(|x| x.to_text()).collect();
                self.record(None, EventRecord::BaseChoice { legal, chosen: v.to_text() }, Vec::new());
            }
            Choice::SyncBase => {
                self.run_sync_base();
            }
        }
        self.steps.push(match (c, step) {
            (Choice::SyncBase, _) => ScriptStep::Base(self.state.oracle.decision().cloned().unwrap_or_else(|| self.scn.cfg.preferred.val.clone())),
            (_, s) => s,
        });
        self.crash_due();
        self.notify_base();
        Ok(())
    }

    fn deliver(&mut self, e: Envelope) {
        let to = e.to;
        let mut log = Vec::new();
        let slot = &mut self.state.nodes[to.0];
        slot.depth = slot.depth.max(e.depth);
        if let Some(h) = slot.machine.honest_mut() {
            let res = h.on_message(&self.scn.cfg, &self.scn.validity, e.from, &e.msg);
            self.apply_actions(to, res, e.depth, &mut log);
        }
        self.record(Some(to), EventRecord::deliver(&e), log);
    }

    /// Hands the base decision to every live proposer that has not seen it.
    fn notify_base(&mut self) {
        let Some(decided) = self.state.oracle.decision().cloned() else { return };
        for i in 0..self.scn.n() {
            let id = NodeId(i);
            let slot = &self.state.nodes[i];
            if slot.crashed || slot.base_notified || !self.state.oracle.has_proposed(id) {
                continue;
            }
            let value = self.state.concrete_decisions.get(&id).cloned().unwrap_or_else(|| decided.clone());
            let depth = self.state.base_depth.max(slot.proposal_depth.unwrap_or(0) + 1);
            let slot = &mut self.state.nodes[i];
            slot.base_notified = true;
            slot.depth = slot.depth.max(depth);
            let mut log = Vec::new();
            if let Some(h) = slot.machine.honest_mut() {
                let res = h.on_base_decision(&self.scn.cfg, value.clone());
                self.apply_actions(id, res, depth, &mut log);
            }
            self.record(Some(id), EventRecord::BaseDecision { value: value.to_text() }, log);
            self.crash_due();
        }
    }

    fn run_sync_base(&mut self) {
        let cfg = &self.scn.cfg;
        let n = cfg.n;
        self.record(None, EventRecord::ModeSwitch { mode: "synchronous-rounds".into() }, Vec::new());
        let mut parts: BTreeMap<NodeId, ConcreteNode> = BTreeMap::new();
        for (id, p) in self.state.oracle.proposals() {
            if !self.state.nodes[id.0].crashed {
                parts.insert(*id, ConcreteNode::for_model(cfg.model, *id, n, cfg.f, p.value.val.clone()));
            }
        }
        let rounds = ConcreteNode::for_model(cfg.model, NodeId(0), n, cfg.f, cfg.preferred.val.clone()).total_rounds();
        let validity = &self.scn.validity;
        let external = cfg.model == FailureModel::ByzantineExternal;
        let accept = |v: &ValuePayload| !external || validity.check(v);
        for round in 0..rounds {
            let mut round_log: BTreeMap<NodeId, Vec<ActionRecord>> = BTreeMap::new();
            for i in 0..n {
                let from = NodeId(i);
                if self.state.nodes[i].crashed {
                    continue;
                }
                let depth = self.state.nodes[i].depth + 1;
                let mut log = Vec::new();
                for to in (0..n).map(NodeId).filter(|t| *t != from) {
                    let msg = match (parts.get(&from), &self.scn.faults[i]) {
                        (Some(node), _) => node.round_message(),
                        (None, Fault::Byzantine(ByzantineStrategy::Equivocate { x, y, targets })) => {
                            equivocate_round(cfg.model, from, round, to, x, y, targets)
                        }
                        _ => None,
                    };
                    if let Some(msg) = msg {
                        let out = Outgoing { from, to, msg: WireMessage::Base(BaseMessage::Round { round, msg }) };
                        self.send(out, depth, &mut log);
                    }
                }
                if !log.is_empty() {
                    round_log.insert(from, log);
                }
            }
            while let Some(pos) = self
                .state
                .pending
                .iter()
                .position(|e| matches!(e.msg, WireMessage::Base(BaseMessage::Round { .. })))
            {
                let e = self.state.pending.remove(pos);
                if self.state.nodes[e.from.0].crashed {
                    self.record(Some(e.to), EventRecord::drop(&e), Vec::new());
                } else {
                    let slot = &mut self.state.nodes[e.to.0];
                    slot.depth = slot.depth.max(e.depth);
                    if let (Some(node), WireMessage::Base(BaseMessage::Round { msg, .. })) = (parts.get_mut(&e.to), &e.msg) {
                        node.deliver(e.from, msg);
                    }
                    self.record(Some(e.to), EventRecord::deliver(&e), Vec::new());
                }
                self.crash_due();
            }
            for (id, node) in parts.iter_mut() {
                if self.state.nodes[id.0].crashed {
                    continue;
                }
                if let Some(m) = node.round_message() {
                    node.deliver(*id, &m);
                }
                node.end_round(&accept);
            }
            let sends: Vec<ActionRecord> = round_log.into_values().flatten().collect();
            self.record(None, EventRecord::RoundEnd { round }, sends);
            self.crash_due();
        }
        for (id, node) in &parts {
            if !self.state.nodes[id.0].crashed {
                if let Some(d) = node.decision() {
                    self.state.concrete_decisions.insert(*id, d);
                }
            }
        }
        self.state.base_depth = parts.keys().map(|id| self.state.nodes[id.0].depth).max().unwrap_or(0);
        let first = self
            .state
            .concrete_decisions
            .iter()
            .find(|(id, _)| self.scn.is_correct(**id))
            .or_else(|| self.state.concrete_decisions.iter().next())
            .map(|(_, v)| v.clone());
        if let Some(v) = first {
            let flavor = self.flavor();
            let legal = self.state.oracle.legal_decisions(flavor, validity).unwrap_or_default();
            if self.state.oracle.record_decision(flavor, validity, v.clone()).is_err() {
                self.state.errors.push(Violation::BaseContract { value: v.clone(), legal });
                // Keep the run going with the concrete outcome.
                let _ = self.state.oracle.force_decision(v);
            }
        }
        self.record(None, EventRecord::ModeSwitch { mode: "asynchronous".into() }, Vec::new());
    }

    /// Runs the concrete protocol on a copy of the current state and checks
    /// every correct node's decision against the oracle's legal set.
    pub fn concrete_decision_is_legal(&self) -> bool {
        let legal = self.state.oracle.legal_decisions(self.flavor(), &self.scn.validity).unwrap_or_default();
        let mut probe = self.clone();
        probe.trace = None;
        probe.run_sync_base();
        probe
            .state
            .concrete_decisions
            .iter()
            .filter(|(id, _)| self.scn.is_correct(**id))
            .all(|(_, v)| legal.contains(v))
    }

    pub fn node_reports(&self) -> Vec<NodeReport> {
        self.state
            .nodes
            .iter()
            .enumerate()
            .map(|(i, s)| NodeReport {
                id: NodeId(i),
                correct: self.scn.faults[i].is_correct(),
                byzantine: self.scn.faults[i].is_byzantine(),
                crashed: s.crashed,
                decision: s.decision.clone(),
                proposes: s.proposes,
                decides: s.decides,
            })
            .collect()
    }

    /// Invariant violations at the current state, assuming quiescence.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.state.errors.clone();
        for x in invariants::check(self.scn, &self.node_reports()) {
            if !v.contains(&x) {
                v.push(x);
            }
        }
        v
    }

    pub fn finish(mut self) -> RunOutcome {
        let violations = self.violations();
        let nodes = self.node_reports();
        let counters = self.state.counters;
        let events = self.state.event_index;
        let trace = self.trace.take().map(|mut lines| {
            lines.extend(nodes.iter().filter_map(|r| r.decision.clone()).map(TraceLine::Decision));
            lines.push(TraceLine::Counters(counters));
            lines.push(TraceLine::Outcome { events, violations: violations.clone() });
            Trace { lines }
        });
        RunOutcome { nodes, counters, violations, events, steps: self.steps, trace }
    }
}

fn record_send(log: &mut Vec<ActionRecord>, out: &Outgoing) {
    let kind = out.msg.kind().to_string();
    let text = out.msg.describe();
    if let Some(ActionRecord::Send { to, msg_kind, msg }) = log.last_mut() {
        if *msg_kind == kind && *msg == text {
            to.push(out.to.0);
            return;
        }
    }
    log.push(ActionRecord::Send { to: vec![out.to.0], msg_kind: kind, msg: text });
}

fn enum_text<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|x| x.as_str().map(str::to_string)).unwrap_or_default()
}

fn schedule_text(s: &Schedule) -> String {
    match s {
        Schedule::Seeded(seed) => format!("seeded:{seed}"),
        Schedule::Scripted(steps) => format!("scripted:{}", steps.len()),
        Schedule::Exhaustive { depth } => format!("exhaustive:{depth}"),
    }
}

/// Drives a scenario to quiescence under its own schedule.
pub fn run(scn: &Scenario) -> Result<RunOutcome, SimError> {
    run_with(scn, RunOptions { trace: true, budget: event_budget_from_env() })
}

pub fn run_with(scn: &Scenario, opts: RunOptions) -> Result<RunOutcome, SimError> {
    let mut sim = Simulator::new(scn, opts.trace)?;
    let mut rng = match &scn.schedule {
        Schedule::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Schedule::Scripted(_) => None,
        Schedule::Exhaustive { .. } => {
            return Err(SimError::ScenarioInvalid("exhaustive schedules are explored, not run".into()));
        }
    };
    let script: &[ScriptStep] = match &scn.schedule {
        Schedule::Scripted(steps) => steps,
        _ => &[],
    };
    let mut cursor = 0;
    loop {
        let enabled = sim.enabled();
        if enabled.is_empty() {
            break;
        }
        if sim.state.event_index >= opts.budget {
            return Err(SimError::NonQuiescence { budget: opts.budget });
        }
        let choice = if let Some(rng) = rng.as_mut() {
            enabled[rng.gen_range(0..enabled.len())].clone()
        } else if let Some(step) = script.get(cursor) {
            cursor += 1;
            sim.match_step(step, &enabled).ok_or_else(|| SimError::ScriptMismatch { index: cursor - 1, step: step.to_string() })?
        } else {
            default_choice(&enabled)
        };
        sim.apply(&choice)?;
    }
    if cursor < script.len() {
        return Err(SimError::ScriptMismatch { index: cursor, step: script[cursor].to_string() });
    }
    Ok(sim.finish())
}

/// Oldest delivery first, then the base, then drops.
fn default_choice(enabled: &[Choice]) -> Choice {
    enabled
        .iter()
        .find(|c| matches!(c, Choice::Deliver(_)))
        .or_else(|| enabled.iter().find(|c| matches!(c, Choice::BaseDecide(_) | Choice::SyncBase)))
        .unwrap_or(&enabled[0])
        .clone()
}
