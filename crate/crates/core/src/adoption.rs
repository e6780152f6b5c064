//! Vote collection and the adoption predicates applied by nodes that cannot
//! decide on the fast path.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::types::{CriteriaSelection, FailureModel, FullValue, NodeId, OptimizerConfig, ValidityPredicate, ValuePayload};

/// First vote received from each sender, plus the order in which senders
/// were first heard.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VoteSet {
    entries: BTreeMap<NodeId, ValuePayload>,
    order: Vec<NodeId>,
}

impl VoteSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `val` for `sender` unless that sender already voted. Returns
    /// whether the vote was accepted.
    pub fn insert(&mut self, sender: NodeId, val: ValuePayload) -> bool {
        if self.entries.contains_key(&sender) {
            return false;
        }
        self.entries.insert(sender, val);
        self.order.push(sender);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, sender: NodeId) -> bool {
        self.entries.contains_key(&sender)
    }

    pub fn get(&self, sender: NodeId) -> Option<&ValuePayload> {
        self.entries.get(&sender)
    }

    /// Senders in delivery order.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &ValuePayload)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// True when the set is non-empty and every vote equals `x`.
    pub fn unanimous_for(&self, x: &ValuePayload) -> bool {
        !self.is_empty() && self.entries.values().all(|v| v == x)
    }
}

// Delivery order is bookkeeping only; two sets with the same entries hash
// alike.
impl Hash for VoteSet {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.entries.hash(state);
    }
}

impl FromIterator<(NodeId, ValuePayload)> for VoteSet {
    fn from_iter<I: IntoIterator<Item = (NodeId, ValuePayload)>>(iter: I) -> Self {
        let mut set = VoteSet::new();
        for (s, v) in iter {
            set.insert(s, v);
        }
        set
    }
}

/// Number of distinct senders whose vote equals `x`.
pub fn count_of(votes: &VoteSet, x: &ValuePayload) -> usize {
    votes.entries.values().filter(|v| *v == x).count()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdoptionError {
    #[error("adoption evaluated over {have} votes, need at least {need}")]
    PreconditionViolation { have: usize, need: usize },
}

/// The per-model adoption predicate over a vote set of size at least `n - f`.
///
/// Benign adopts on one copy of the preferred value, classical on `f + 1`
/// copies, external on one copy provided the locally held preferred value is
/// valid.
pub fn adoption_criteria(
    model: FailureModel,
    votes: &VoteSet,
    preferred: &FullValue,
    n: usize,
    f: usize,
    valid: &dyn ValidityPredicate,
) -> Result<bool, AdoptionError> {
    check_quorum(votes, n, f)?;
    let copies = count_of(votes, &preferred.val);
    Ok(match model {
        FailureModel::Benign => copies >= 1,
        FailureModel::ByzantineClassical => copies > f,
        FailureModel::ByzantineExternal => copies >= 1 && valid.is_valid(preferred),
    })
}

/// Applies the configuration's criteria selection, which is either the model's
/// own predicate or a fixed copy threshold.
pub fn adopts(cfg: &OptimizerConfig, votes: &VoteSet, valid: &dyn ValidityPredicate) -> Result<bool, AdoptionError> {
    match cfg.criteria {
        CriteriaSelection::PerModel => adoption_criteria(cfg.model, votes, &cfg.preferred, cfg.n, cfg.f, valid),
        CriteriaSelection::MinCount(k) => {
            check_quorum(votes, cfg.n, cfg.f)?;
            Ok(count_of(votes, &cfg.preferred.val) >= k)
        }
    }
}

fn check_quorum(votes: &VoteSet, n: usize, f: usize) -> Result<(), AdoptionError> {
    let need = n.saturating_sub(f);
    if votes.len() < need {
        return Err(AdoptionError::PreconditionViolation { have: votes.len(), need });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{val, ValidityTable};
    use proptest::prelude::*;

    fn votes(vals: &[&str]) -> VoteSet {
        vals.iter().enumerate().map(|(i, s)| (NodeId(i), val(s))).collect()
    }

    fn pref() -> FullValue {
        FullValue::bare(val("v"))
    }

    fn all_valid() -> ValidityTable {
        ValidityTable::new()
    }

    #[test]
    fn count_examples() {
        let vs: VoteSet = [(NodeId(1), val("v")), (NodeId(2), val("v")), (NodeId(3), val("u"))]
            .into_iter()
            .collect();
        assert_eq!(count_of(&vs, &val("v")), 2);
        assert_eq!(count_of(&VoteSet::new(), &val("v")), 0);
        assert_eq!(count_of(&votes(&["v"]), &val("u")), 0);
    }

    #[test]
    fn duplicate_sender_ignored() {
        let mut vs = VoteSet::new();
        assert!(vs.insert(NodeId(3), val("v")));
        assert!(!vs.insert(NodeId(3), val("u")));
        assert_eq!(vs.len(), 1);
        assert_eq!(vs.get(NodeId(3)), Some(&val("v")));
        assert_eq!(vs.order(), &[NodeId(3)]);
    }

    #[test]
    fn benign_one_copy() {
        let t = all_valid();
        assert!(adoption_criteria(FailureModel::Benign, &votes(&["u", "u", "v"]), &pref(), 5, 2, &t).unwrap());
    }

    #[test]
    fn classical_needs_f_plus_one() {
        let t = all_valid();
        let three = votes(&["v", "v", "v", "u", "u", "u", "u"]);
        assert!(adoption_criteria(FailureModel::ByzantineClassical, &three, &pref(), 9, 2, &t).unwrap());
        let two = votes(&["v", "v", "u", "u", "u", "u", "u"]);
        assert!(!adoption_criteria(FailureModel::ByzantineClassical, &two, &pref(), 9, 2, &t).unwrap());
    }

    #[test]
    fn external_checks_validity() {
        let invalid = ValidityTable::new().with(val("v"), false);
        let vs = votes(&["v", "u", "u"]);
        assert!(!adoption_criteria(FailureModel::ByzantineExternal, &vs, &pref(), 4, 1, &invalid).unwrap());
        assert!(adoption_criteria(FailureModel::ByzantineExternal, &vs, &pref(), 4, 1, &all_valid()).unwrap());
    }

    #[test]
    fn preferred_absent_never_adopts() {
        let t = all_valid();
        for model in [FailureModel::Benign, FailureModel::ByzantineClassical, FailureModel::ByzantineExternal] {
            assert!(!adoption_criteria(model, &votes(&["u", "u", "u", "u"]), &pref(), 5, 1, &t).unwrap());
        }
    }

    #[test]
    fn precondition_enforced() {
        let err = adoption_criteria(FailureModel::Benign, &votes(&["v"]), &pref(), 5, 2, &all_valid());
        assert_eq!(err, Err(AdoptionError::PreconditionViolation { have: 1, need: 3 }));
    }

    #[test]
    fn min_count_selection() {
        let mut cfg = OptimizerConfig::new(4, 1, pref(), FailureModel::ByzantineClassical);
        cfg.straw_man = true;
        cfg.criteria = CriteriaSelection::MinCount(1);
        assert!(adopts(&cfg, &votes(&["u", "u", "v"]), &all_valid()).unwrap());
        cfg.criteria = CriteriaSelection::PerModel;
        assert!(!adopts(&cfg, &votes(&["u", "u", "v"]), &all_valid()).unwrap());
    }

    /// Every size-`k` subset of `0..n` as a bitmask.
    fn subsets(n: usize, k: usize) -> impl Iterator<Item = u32> {
        (0u32..(1 << n)).filter(move |m| m.count_ones() as usize == k)
    }

    #[test]
    fn benign_worst_case_enumeration() {
        // n = 2f+1: whenever some (n-f)-subset is all v, every other
        // (n-f)-subset contains at least one v.
        for n in [3usize, 5, 7] {
            let f = (n - 1) / 2;
            let q = n - f;
            for assignment in 0u32..(1 << n) {
                let is_v = |i: usize| assignment & (1 << i) != 0;
                let all_v_exists = subsets(n, q).any(|m| (0..n).filter(|i| m & (1 << i) != 0).all(is_v));
                if !all_v_exists {
                    continue;
                }
                for m in subsets(n, q) {
                    let vs: VoteSet = (0..n)
                        .filter(|i| m & (1 << i) != 0)
                        .map(|i| (NodeId(i), val(if is_v(i) { "v" } else { "u" })))
                        .collect();
                    assert!(
                        adoption_criteria(FailureModel::Benign, &vs, &pref(), n, f, &all_valid()).unwrap(),
                        "n={n} assignment={assignment:b} subset={m:b}"
                    );
                }
            }
        }
    }

    #[test]
    fn classical_worst_case_enumeration() {
        // n = 4f+1, n-f correct-labelled v voters seen by p, f of those
        // Byzantine flip to u towards q: every (n-f)-subset q can see still
        // holds f+1 copies of v.
        for f in [1usize, 2] {
            let n = 4 * f + 1;
            let q = n - f;
            // Nodes 0..n-f voted v to p; nodes n-f..n voted u. Byzantine
            // nodes are any f of the v voters.
            for byz in subsets(q, f) {
                for seen in subsets(n, q) {
                    let vs: VoteSet = (0..n)
                        .filter(|i| seen & (1 << i) != 0)
                        .map(|i| {
                            let v_to_p = i < q;
                            let flipped = i < q && byz & (1 << i) != 0;
                            (NodeId(i), val(if v_to_p && !flipped { "v" } else { "u" }))
                        })
                        .collect();
                    assert!(count_of(&vs, &val("v")) > f);
                    assert!(adoption_criteria(FailureModel::ByzantineClassical, &vs, &pref(), n, f, &all_valid()).unwrap());
                }
            }
        }
    }

    fn arb_votes() -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(any::<bool>(), 1..12)
    }

    proptest! {
        #[test]
        fn adding_preferred_vote_is_monotone(bits in arb_votes(), f in 0usize..3, m in 0u8..3) {
            let model = [FailureModel::Benign, FailureModel::ByzantineClassical, FailureModel::ByzantineExternal][m as usize];
            let n = bits.len() + 1;
            prop_assume!(bits.len() + f >= n);
            let vs: VoteSet = bits.iter().enumerate().map(|(i, b)| (NodeId(i), val(if *b { "v" } else { "u" }))).collect();
            let before = adoption_criteria(model, &vs, &pref(), n, f, &all_valid()).unwrap();
            let mut more = vs.clone();
            more.insert(NodeId(n - 1), val("v"));
            let after = adoption_criteria(model, &more, &pref(), n, f, &all_valid()).unwrap();
            prop_assert!(!before || after);
        }

        #[test]
        fn classical_implies_benign(bits in arb_votes(), f in 0usize..4) {
            let n = bits.len() + f;
            let vs: VoteSet = bits.iter().enumerate().map(|(i, b)| (NodeId(i), val(if *b { "v" } else { "u" }))).collect();
            let classical = adoption_criteria(FailureModel::ByzantineClassical, &vs, &pref(), n, f, &all_valid()).unwrap();
            let benign = adoption_criteria(FailureModel::Benign, &vs, &pref(), n, f, &all_valid()).unwrap();
            prop_assert!(!classical || benign);
        }

        #[test]
        fn at_most_one_entry_per_sender(ops in proptest::collection::vec((0usize..6, any::<bool>()), 0..30)) {
            let mut vs = VoteSet::new();
            for (s, b) in &ops {
                vs.insert(NodeId(*s), val(if *b { "v" } else { "u" }));
            }
            prop_assert!(vs.len() <= 6);
            prop_assert_eq!(vs.order().len(), vs.len());
        }
    }
}
