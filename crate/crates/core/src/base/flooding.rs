use std::collections::BTreeSet;

use crate::types::ValuePayload;

/// Crash-tolerant flooding consensus: `f + 1` synchronous rounds of
/// broadcasting every value seen so far, then decide the smallest.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FloodSet {
    known: BTreeSet<ValuePayload>,
    rounds: usize,
    completed: usize,
}

impl FloodSet {
    pub fn new(initial: ValuePayload, f: usize) -> Self {
        FloodSet {
            known: BTreeSet::from([initial]),
            rounds: f + 1,
            completed: 0,
        }
    }

    pub fn total_rounds(&self) -> usize {
        self.rounds
    }

    pub fn known(&self) -> &BTreeSet<ValuePayload> {
        &self.known
    }

    pub fn round_message(&self) -> BTreeSet<ValuePayload> {
        self.known.clone()
    }

    pub fn absorb(&mut self, values: &BTreeSet<ValuePayload>) {
        self.known.extend(values.iter().cloned());
    }

    pub fn end_round(&mut self) {
        self.completed += 1;
    }

    pub fn decision(&self) -> Option<ValuePayload> {
        (self.completed >= self.rounds).then(|| self.known.iter().next().cloned()).flatten()
    }
}
