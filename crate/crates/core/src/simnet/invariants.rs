use std::fmt;

use serde::Serialize;

use super::scenario::Scenario;
use crate::optimizer::DecisionRecord;
use crate::types::{FailureModel, NodeId, ValuePayload};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Agreement { a: NodeId, a_value: ValuePayload, b: NodeId, b_value: ValuePayload },
    Validity { model: FailureModel, node: NodeId, value: ValuePayload },
    Termination { node: NodeId },
    JoinOnce { node: NodeId, proposals: u32 },
    DecideOnce { node: NodeId, decisions: u32 },
    /// Base decision differs from an earlier fast decision.
    Consistency { node: NodeId, fast: ValuePayload, base: ValuePayload },
    /// A concrete base protocol decided outside the oracle's legal set.
    BaseContract { value: ValuePayload, legal: Vec<ValuePayload> },
    /// A state machine rejected an event it should never see.
    Protocol { node: NodeId, detail: String },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Agreement { .. } => "agreement",
            Violation::Validity { .. } => "validity",
            Violation::Termination { .. } => "termination",
            Violation::JoinOnce { .. } => "join-once",
            Violation::DecideOnce { .. } => "decide-once",
            Violation::Consistency { .. } => "consistency",
            Violation::BaseContract { .. } => "base-contract",
            Violation::Protocol { .. } => "protocol",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Agreement { a, a_value, b, b_value } => {
                write!(f, "agreement: node {a} decided {a_value}, node {b} decided {b_value}")
            }
            Violation::Validity { model, node, value } => write!(f, "validity ({model:?}): node {node} decided {value}"),
            Violation::Termination { node } => write!(f, "termination: node {node} never decided"),
            Violation::JoinOnce { node, proposals } => write!(f, "join-once: node {node} proposed {proposals} times"),
            Violation::DecideOnce { node, decisions } => write!(f, "decide-once: node {node} decided {decisions} times"),
            Violation::Consistency { node, fast, base } => {
                write!(f, "consistency: node {node} fast-decided {fast} but base decided {base}")
            }
            Violation::BaseContract { value, legal } => write!(f, "base-contract: decided {value}, legal {legal:?}"),
            Violation::Protocol { node, detail } => write!(f, "protocol: node {node}: {detail}"),
        }
    }
}

/// Final per-node facts the invariant suite needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeReport {
    pub id: NodeId,
    pub correct: bool,
    pub byzantine: bool,
    pub crashed: bool,
    pub decision: Option<DecisionRecord>,
    pub proposes: u32,
    pub decides: u32,
}

/// Agreement, validity, termination, join-once and decide-once over a
/// quiescent run.
pub fn check(scn: &Scenario, nodes: &[NodeReport]) -> Vec<Violation> {
    let mut out = Vec::new();
    let correct: Vec<&NodeReport> = nodes.iter().filter(|r| r.correct).collect();

    for r in &correct {
        if r.decision.is_none() {
            out.push(Violation::Termination { node: r.id });
        }
    }

    let decided: Vec<(NodeId, &ValuePayload)> = correct
        .iter()
        .filter_map(|r| r.decision.as_ref().map(|d| (r.id, &d.value)))
        .collect();
    if let Some((a, av)) = decided.first() {
        if let Some((b, bv)) = decided.iter().find(|(_, v)| v != av) {
            out.push(Violation::Agreement { a: *a, a_value: (*av).clone(), b: *b, b_value: (*bv).clone() });
        }
    }

    for (node, value) in &decided {
        if !valid_decision(scn, value) {
            out.push(Violation::Validity { model: scn.cfg.model, node: *node, value: (*value).clone() });
        }
    }

    for r in nodes.iter().filter(|r| !r.byzantine) {
        if r.proposes > 1 {
            out.push(Violation::JoinOnce { node: r.id, proposals: r.proposes });
        }
        if r.decides > 1 {
            out.push(Violation::DecideOnce { node: r.id, decisions: r.decides });
        }
    }
    out
}

fn valid_decision(scn: &Scenario, value: &ValuePayload) -> bool {
    match scn.cfg.model {
        FailureModel::Benign => scn.initial_values.iter().any(|fv| fv.val == *value),
        FailureModel::ByzantineClassical => {
            let mut inputs = scn.correct_nodes().map(|i| &scn.initial_values[i.index()].val);
            match inputs.next() {
                Some(first) if inputs.all(|x| x == first) => value == first,
                _ => true,
            }
        }
        FailureModel::ByzantineExternal => !scn.correct_inputs_valid() || scn.validity.check(value),
    }
}
