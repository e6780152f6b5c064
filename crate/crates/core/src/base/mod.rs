//! The pluggable base consensus invoked when the fast path fails.
//!
//! [`OracleInstance`] is a referee that implements exactly the consensus
//! contract and lets an adversary pick among legal decisions.
//! [`ConcreteNode`] wraps two real synchronous-round protocols used for
//! end-to-end demos: flooding for crash faults and phase king for
//! Byzantine faults.

mod flooding;
mod oracle;
mod phase_king;

use std::collections::{BTreeMap, BTreeSet};

pub use flooding::FloodSet;
pub use oracle::{BaseError, OracleInstance, Proposal, ValidityFlavor};
pub use phase_king::{KingMsg, PhaseKing};

use crate::types::{FailureModel, NodeId, ValuePayload};

/// A message of a concrete base protocol round.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoundMsg {
    Flood(BTreeSet<ValuePayload>),
    King(KingMsg),
}

impl RoundMsg {
    pub fn byte_len(&self) -> usize {
        match self {
            RoundMsg::Flood(set) => set.iter().map(ValuePayload::len).sum(),
            RoundMsg::King(m) => m.value().len(),
        }
    }
}

/// One participant of a concrete synchronous base protocol.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConcreteNode {
    Flood(FloodSet),
    King(PhaseKing),
}

impl ConcreteNode {
    /// Flooding for the benign model, phase king for Byzantine models.
    pub fn for_model(model: FailureModel, id: NodeId, n: usize, f: usize, initial: ValuePayload) -> Self {
        match model {
            FailureModel::Benign => ConcreteNode::Flood(FloodSet::new(initial, f)),
            _ => ConcreteNode::King(PhaseKing::new(id, n, f, initial)),
        }
    }

    pub fn total_rounds(&self) -> usize {
        match self {
            ConcreteNode::Flood(p) => p.total_rounds(),
            ConcreteNode::King(p) => p.total_rounds(),
        }
    }

    pub fn round_message(&self) -> Option<RoundMsg> {
        match self {
            ConcreteNode::Flood(p) => Some(RoundMsg::Flood(p.round_message())),
            ConcreteNode::King(p) => p.round_message().map(RoundMsg::King),
        }
    }

    pub fn deliver(&mut self, from: NodeId, msg: &RoundMsg) {
        match (self, msg) {
            (ConcreteNode::Flood(p), RoundMsg::Flood(set)) => p.absorb(set),
            (ConcreteNode::King(p), RoundMsg::King(m)) => p.deliver(from, m.clone()),
            _ => {}
        }
    }

    pub fn end_round(&mut self, accept: &dyn Fn(&ValuePayload) -> bool) {
        match self {
            ConcreteNode::Flood(p) => p.end_round(),
            ConcreteNode::King(p) => p.end_round(accept),
        }
    }

    pub fn decision(&self) -> Option<ValuePayload> {
        match self {
            ConcreteNode::Flood(p) => p.decision(),
            ConcreteNode::King(p) => p.decision(),
        }
    }
}

/// Message a Byzantine participant sends to `to` in a given round.
pub type ByzantineRoundFn<'a> = dyn Fn(NodeId, usize, NodeId) -> Option<RoundMsg> + 'a;

/// How a participant behaves in a standalone synchronous run.
pub enum Participant<'a> {
    Honest(ConcreteNode),
    /// Crashes in `round` after its message reached the first `delivered`
    /// recipients (in id order).
    Crashing { node: ConcreteNode, round: usize, delivered: usize },
    Byzantine(Box<ByzantineRoundFn<'a>>),
}

/// Runs a concrete protocol to completion in lock-step rounds and returns
/// the decision of every node that finished honestly.
pub fn run_synchronous(
    mut participants: BTreeMap<NodeId, Participant<'_>>,
    accept: &dyn Fn(&ValuePayload) -> bool,
) -> BTreeMap<NodeId, ValuePayload> {
    let rounds = participants
        .values()
        .filter_map(|p| match p {
            Participant::Honest(n) | Participant::Crashing { node: n, .. } => Some(n.total_rounds()),
            Participant::Byzantine(_) => None,
        })
        .max()
        .unwrap_or(0);
    let ids: Vec<NodeId> = participants.keys().copied().collect();
    let mut crashed: BTreeSet<NodeId> = BTreeSet::new();
    for round in 0..rounds {
        let mut inbox: Vec<(NodeId, NodeId, RoundMsg)> = Vec::new();
        for (&from, p) in &participants {
            if crashed.contains(&from) {
                continue;
            }
            let targets = ids.iter().copied().filter(|t| *t != from);
            match p {
                Participant::Honest(node) => {
                    if let Some(m) = node.round_message() {
                        inbox.extend(targets.map(|t| (from, t, m.clone())));
                    }
                }
                Participant::Crashing { node, round: r, delivered } => {
                    if let Some(m) = node.round_message() {
                        let limit = if *r == round { *delivered } else { usize::MAX };
                        inbox.extend(targets.take(limit).map(|t| (from, t, m.clone())));
                    }
                }
                Participant::Byzantine(send) => {
                    inbox.extend(targets.filter_map(|t| send(from, round, t).map(|m| (from, t, m))));
                }
            }
        }
        for (&id, p) in &participants {
            if let Participant::Crashing { round: r, .. } = p {
                if *r == round {
                    crashed.insert(id);
                }
            }
        }
        for (from, to, msg) in inbox {
            if crashed.contains(&to) {
                continue;
            }
            if let Some(Participant::Honest(node) | Participant::Crashing { node, .. }) = participants.get_mut(&to) {
                node.deliver(from, &msg);
            }
        }
        for (id, p) in participants.iter_mut() {
            if crashed.contains(id) {
                continue;
            }
            if let Participant::Honest(node) | Participant::Crashing { node, .. } = p {
                // Own message counts toward the node's own tallies.
                if let Some(m) = node.round_message() {
                    node.deliver(*id, &m);
                }
                node.end_round(accept);
            }
        }
    }
    participants
        .into_iter()
        .filter_map(|(id, p)| match p {
            Participant::Honest(node) if !crashed.contains(&id) => node.decision().map(|d| (id, d)),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::val;

    fn honest(model: FailureModel, id: usize, n: usize, f: usize, v: &str) -> (NodeId, Participant<'static>) {
        (NodeId(id), Participant::Honest(ConcreteNode::for_model(model, NodeId(id), n, f, val(v))))
    }

    #[test]
    fn flooding_survivors_agree_after_mid_round_crash() {
        // n=3, f=1: survivors propose v; the third node crashes in round 0
        // after reaching one peer.
        let mut ps = BTreeMap::from([honest(FailureModel::Benign, 0, 3, 1, "v"), honest(FailureModel::Benign, 1, 3, 1, "v")]);
        ps.insert(
            NodeId(2),
            Participant::Crashing {
                node: ConcreteNode::for_model(FailureModel::Benign, NodeId(2), 3, 1, val("v")),
                round: 0,
                delivered: 1,
            },
        );
        let d = run_synchronous(ps, &|_| true);
        assert_eq!(d.len(), 2);
        assert!(d.values().all(|x| *x == val("v")));
    }

    #[test]
    fn flooding_partial_crash_with_distinct_value_still_agrees() {
        let mut ps = BTreeMap::from([honest(FailureModel::Benign, 0, 3, 1, "v"), honest(FailureModel::Benign, 1, 3, 1, "v")]);
        ps.insert(
            NodeId(2),
            Participant::Crashing {
                node: ConcreteNode::for_model(FailureModel::Benign, NodeId(2), 3, 1, val("a")),
                round: 0,
                delivered: 1,
            },
        );
        let d = run_synchronous(ps, &|_| true);
        let vals: BTreeSet<_> = d.values().collect();
        assert_eq!(vals.len(), 1);
    }

    #[test]
    fn phase_king_unanimous_with_equivocator() {
        let n = 5;
        let f = 1;
        let mut ps: BTreeMap<_, _> = (1..5).map(|i| honest(FailureModel::ByzantineClassical, i, n, f, "v")).collect();
        let equivocate = |_: NodeId, round: usize, to: NodeId| {
            let v = if to.0.is_multiple_of(2) { val("u") } else { val("v") };
            Some(RoundMsg::King(match round % 3 {
                0 => KingMsg::Value(v),
                1 => KingMsg::Propose(v),
                _ => KingMsg::King(v),
            }))
        };
        ps.insert(NodeId(0), Participant::Byzantine(Box::new(equivocate)));
        let d = run_synchronous(ps, &|_| true);
        assert_eq!(d.len(), 4);
        assert!(d.values().all(|x| *x == val("v")));
    }

    #[test]
    fn phase_king_split_inputs_agree() {
        for pattern in 0u32..16 {
            let n = 4;
            let f = 1;
            let mut ps: BTreeMap<_, _> = (0..3)
                .map(|i| honest(FailureModel::ByzantineExternal, i, n, f, if pattern & (1 << i) != 0 { "v" } else { "u" }))
                .collect();
            let bits = pattern;
            ps.insert(
                NodeId(3),
                Participant::Byzantine(Box::new(move |_, round, to: NodeId| {
                    let v = if bits & (1 << to.0) == 0 { val("v") } else { val("u") };
                    Some(RoundMsg::King(match round % 3 {
                        0 => KingMsg::Value(v),
                        1 => KingMsg::Propose(v),
                        _ => KingMsg::King(v),
                    }))
                })),
            );
            let d = run_synchronous(ps, &|_| true);
            let vals: BTreeSet<_> = d.values().collect();
            assert_eq!(vals.len(), 1, "pattern {pattern:b}: {d:?}");
        }
    }

    #[test]
    fn identical_proposals_no_faults() {
        for model in [FailureModel::Benign, FailureModel::ByzantineClassical] {
            let ps: BTreeMap<_, _> = (0..5).map(|i| honest(model, i, 5, 1, "w")).collect();
            let d = run_synchronous(ps, &|_| true);
            assert_eq!(d.len(), 5);
            assert!(d.values().all(|x| *x == val("w")));
        }
    }

    #[test]
    fn king_rejects_unacceptable_values() {
        let n = 4;
        let f = 1;
        let mut ps: BTreeMap<_, _> = [(1, "v"), (2, "u"), (3, "v")]
            .into_iter()
            .map(|(i, v)| honest(FailureModel::ByzantineExternal, i, n, f, v))
            .collect();
        ps.insert(
            NodeId(0),
            Participant::Byzantine(Box::new(|_, round, _| {
                Some(RoundMsg::King(match round % 3 {
                    0 => KingMsg::Value(val("bad")),
                    1 => KingMsg::Propose(val("bad")),
                    _ => KingMsg::King(val("bad")),
                }))
            })),
        );
        let d = run_synchronous(ps, &|v| *v != val("bad"));
        assert!(d.values().all(|x| *x != val("bad")));
        let vals: BTreeSet<_> = d.values().collect();
        assert_eq!(vals.len(), 1);
    }
}
