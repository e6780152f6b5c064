use std::collections::BTreeMap;

use serde::Serialize;

use crate::optimizer::DecisionPath;
use crate::scenarios::check_expectation;
use crate::simnet::{RunOutcome, Scenario, Violation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeSummary {
    pub id: usize,
    /// `correct`, `crashed` or `byzantine`.
    pub role: &'static str,
    pub decided_value: Option<String>,
    pub path: Option<DecisionPath>,
    pub rounds: Option<u32>,
    pub proposes: u32,
    pub decides: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ByteSummary {
    pub payload: u64,
    pub proof: u64,
}

/// Per-run digest written by `run --summary`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub nodes: Vec<NodeSummary>,
    pub messages: BTreeMap<&'static str, u64>,
    pub bytes: BTreeMap<&'static str, ByteSummary>,
    /// Every correct node decided on the fast path.
    pub fast_path: bool,
    pub violations: Vec<Violation>,
    /// Mismatch with the scenario's declared outcome, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expectation_failure: Option<String>,
}

impl MetricsSummary {
    pub fn new(scn: &Scenario, out: &RunOutcome) -> Self {
        let nodes = out
            .nodes
            .iter()
            .map(|r| NodeSummary {
                id: r.id.0,
                role: if r.byzantine {
                    "byzantine"
                } else if r.crashed || !r.correct {
                    "crashed"
                } else {
                    "correct"
                },
                decided_value: r.decision.as_ref().map(|d| d.value.to_text()),
                path: r.decision.as_ref().map(|d| d.path),
                rounds: r.decision.as_ref().map(|d| d.rounds),
                proposes: r.proposes,
                decides: r.decides,
            })
            .collect();
        let c = &out.counters;
        let kinds = [("val", c.val), ("full", c.full), ("base", c.base)];
        let correct: Vec<_> = out.nodes.iter().filter(|r| r.correct).collect();
        MetricsSummary {
            scenario: scn.name.clone(),
            nodes,
            messages: kinds.iter().map(|(k, c)| (*k, c.messages)).collect(),
            bytes: kinds
                .iter()
                .map(|(k, c)| (*k, ByteSummary { payload: c.payload_bytes, proof: c.proof_bytes }))
                .collect(),
            fast_path: !correct.is_empty()
                && correct.iter().all(|r| r.decision.as_ref().is_some_and(|d| d.path == DecisionPath::Fast)),
            violations: out.violations.clone(),
            expectation_failure: scn.expect.as_ref().and_then(|e| check_expectation(e, out).err()),
        }
    }

    /// 0 when no invariant was violated, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summaries always serialize") + "\n"
    }
}
