use std::collections::BTreeMap;

use crate::types::{NodeId, ValuePayload};

/// Message of one phase-king round.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KingMsg {
    Value(ValuePayload),
    Propose(ValuePayload),
    King(ValuePayload),
}

impl KingMsg {
    pub fn value(&self) -> &ValuePayload {
        match self {
            KingMsg::Value(v) | KingMsg::Propose(v) | KingMsg::King(v) => v,
        }
    }
}

/// Three-round-per-phase king protocol for `n > 3f`, run for `f + 1` phases
/// with node `i` as king of phase `i`.
///
/// Round 0 exchanges current values, round 1 proposes any value seen at least
/// `n - f` times and switches to a value proposed more than `f` times, round 2
/// lets the king overwrite nodes that saw fewer than `n - f` proposals for
/// their value. A king value rejected by `accept` is ignored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PhaseKing {
    id: NodeId,
    n: usize,
    f: usize,
    x: ValuePayload,
    round: usize,
    values: BTreeMap<NodeId, ValuePayload>,
    proposes: BTreeMap<NodeId, ValuePayload>,
    king_value: Option<ValuePayload>,
}

impl PhaseKing {
    pub fn new(id: NodeId, n: usize, f: usize, initial: ValuePayload) -> Self {
        PhaseKing {
            id,
            n,
            f,
            x: initial,
            round: 0,
            values: BTreeMap::new(),
            proposes: BTreeMap::new(),
            king_value: None,
        }
    }

    pub fn total_rounds(&self) -> usize {
        3 * (self.f + 1)
    }

    pub fn current(&self) -> &ValuePayload {
        &self.x
    }

    pub fn king_of(round: usize) -> NodeId {
        NodeId(round / 3)
    }

    /// The message this node broadcasts in the current round, if any.
    pub fn round_message(&self) -> Option<KingMsg> {
        match self.round % 3 {
            0 => Some(KingMsg::Value(self.x.clone())),
            1 => self.supported().map(KingMsg::Propose),
            _ => (Self::king_of(self.round) == self.id).then(|| KingMsg::King(self.x.clone())),
        }
    }

    fn supported(&self) -> Option<ValuePayload> {
        tally(self.values.values())
            .into_iter()
            .find(|(_, c)| *c >= self.n - self.f)
            .map(|(v, _)| v)
    }

    pub fn deliver(&mut self, from: NodeId, msg: KingMsg) {
        match (self.round % 3, msg) {
            (0, KingMsg::Value(v)) => {
                self.values.entry(from).or_insert(v);
            }
            (1, KingMsg::Propose(v)) => {
                self.proposes.entry(from).or_insert(v);
            }
            (2, KingMsg::King(v)) if from == Self::king_of(self.round) => {
                self.king_value.get_or_insert(v);
            }
            _ => {}
        }
    }

    pub fn end_round(&mut self, accept: &dyn Fn(&ValuePayload) -> bool) {
        match self.round % 3 {
            0 => {}
            1 => {
                if let Some((z, _)) = tally(self.proposes.values()).into_iter().find(|(_, c)| *c > self.f) {
                    self.x = z;
                }
            }
            _ => {
                let support = self.proposes.values().filter(|v| **v == self.x).count();
                if support < self.n - self.f {
                    if let Some(w) = self.king_value.take() {
                        if accept(&w) {
                            self.x = w;
                        }
                    }
                }
                self.values.clear();
                self.proposes.clear();
                self.king_value = None;
            }
        }
        self.round += 1;
    }

    pub fn decision(&self) -> Option<ValuePayload> {
        (self.round >= self.total_rounds()).then(|| self.x.clone())
    }
}

fn tally<'a>(vals: impl Iterator<Item = &'a ValuePayload>) -> Vec<(ValuePayload, usize)> {
    let mut counts: BTreeMap<&ValuePayload, usize> = BTreeMap::new();
    for v in vals {
        *counts.entry(v).or_default() += 1;
    }
    counts.into_iter().map(|(v, c)| (v.clone(), c)).collect()
}
