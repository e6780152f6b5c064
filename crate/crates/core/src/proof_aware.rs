//! Proof-aware variant: the first round carries value payloads only, and
//! proofs travel only when the fast path fails.

use std::collections::{BTreeMap, BTreeSet};

use crate::adoption::{adopts, VoteSet};
use crate::optimizer::{DecisionPath, Message, NodeAction, NodeError};
use crate::types::{FullValue, NodeId, OptimizerConfig, ValidityPredicate, ValuePayload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProofAwarePhase {
    Phase1,
    FullExchange,
    FastDecided,
    InBase,
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProofAwareState {
    pub phase: ProofAwarePhase,
    pub my_value: FullValue,
    pub votes: VoteSet,
    pub fullvals: BTreeMap<NodeId, FullValue>,
    pub replied_to: BTreeSet<NodeId>,
    pub broadcast_full: bool,
    pub started: bool,
    pub joined_base: bool,
    pub base_seen: bool,
    pub decision: Option<ValuePayload>,
    pub proposed: Option<FullValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProofAwareNode {
    pub id: NodeId,
    pub state: ProofAwareState,
}

impl ProofAwareNode {
    pub fn new(id: NodeId, my_value: FullValue) -> Self {
        ProofAwareNode {
            id,
            state: ProofAwareState {
                phase: ProofAwarePhase::Phase1,
                my_value,
                votes: VoteSet::new(),
                fullvals: BTreeMap::new(),
                replied_to: BTreeSet::new(),
                broadcast_full: false,
                started: false,
                joined_base: false,
                base_seen: false,
                decision: None,
                proposed: None,
            },
        }
    }

    pub fn phase(&self) -> ProofAwarePhase {
        self.state.phase
    }

    pub fn pa_start(&mut self, cfg: &OptimizerConfig, valid: &dyn ValidityPredicate) -> Result<Vec<NodeAction>, NodeError> {
        if self.state.started {
            return Err(NodeError::AlreadyStarted(self.id));
        }
        self.state.started = true;
        let payload = self.state.my_value.val.clone();
        self.state.votes.insert(self.id, payload.clone());
        let mut out = vec![NodeAction::Broadcast(Message::Val(payload))];
        out.extend(self.maybe_evaluate_votes(cfg, valid)?);
        Ok(out)
    }

    pub fn pa_on_val(
        &mut self,
        cfg: &OptimizerConfig,
        valid: &dyn ValidityPredicate,
        sender: NodeId,
        val: ValuePayload,
    ) -> Result<Vec<NodeAction>, NodeError> {
        check_sender(cfg, sender)?;
        if !self.state.votes.insert(sender, val) || !self.state.started {
            return Ok(Vec::new());
        }
        self.maybe_evaluate_votes(cfg, valid)
    }

    fn maybe_evaluate_votes(&mut self, cfg: &OptimizerConfig, valid: &dyn ValidityPredicate) -> Result<Vec<NodeAction>, NodeError> {
        if self.state.phase != ProofAwarePhase::Phase1 || self.state.votes.len() < cfg.quorum() {
            return Ok(Vec::new());
        }
        if self.state.votes.unanimous_for(&cfg.preferred.val) {
            self.state.phase = ProofAwarePhase::FastDecided;
            self.state.decision = Some(cfg.preferred.val.clone());
            let mut out = vec![NodeAction::Decide(cfg.preferred.val.clone(), DecisionPath::Fast)];
            if self.state.base_seen {
                out.extend(self.join_base(cfg));
            }
            return Ok(out);
        }
        // Fast path failed: exchange full values. Full values received while
        // still in the first phase are kept.
        self.state.phase = ProofAwarePhase::FullExchange;
        self.state.fullvals.insert(self.id, self.state.my_value.clone());
        self.state.broadcast_full = true;
        let mut out = vec![NodeAction::Broadcast(Message::Full(self.state.my_value.clone()))];
        out.extend(self.maybe_evaluate_fullvals(cfg, valid)?);
        Ok(out)
    }

    pub fn pa_on_full(
        &mut self,
        cfg: &OptimizerConfig,
        valid: &dyn ValidityPredicate,
        sender: NodeId,
        full: FullValue,
    ) -> Result<Vec<NodeAction>, NodeError> {
        check_sender(cfg, sender)?;
        let mut out = Vec::new();
        if sender == self.id {
            return Ok(out);
        }
        self.state.fullvals.entry(sender).or_insert(full);
        if !self.state.broadcast_full && self.state.replied_to.insert(sender) {
            out.push(NodeAction::SendTo(sender, Message::Full(self.state.my_value.clone())));
        }
        out.extend(self.maybe_evaluate_fullvals(cfg, valid)?);
        Ok(out)
    }

    fn maybe_evaluate_fullvals(&mut self, cfg: &OptimizerConfig, valid: &dyn ValidityPredicate) -> Result<Vec<NodeAction>, NodeError> {
        if self.state.phase != ProofAwarePhase::FullExchange || self.state.fullvals.len() < cfg.quorum() {
            return Ok(Vec::new());
        }
        let votes: VoteSet = self.state.fullvals.iter().map(|(s, v)| (*s, v.val.clone())).collect();
        let value = if adopts(cfg, &votes, valid)? {
            cfg.preferred.clone()
        } else {
            self.state.my_value.clone()
        };
        self.state.phase = ProofAwarePhase::InBase;
        self.state.proposed = Some(value.clone());
        Ok(vec![NodeAction::ProposeToBase(value)])
    }

    fn join_base(&mut self, cfg: &OptimizerConfig) -> Vec<NodeAction> {
        if self.state.joined_base {
            return Vec::new();
        }
        self.state.joined_base = true;
        self.state.proposed = Some(cfg.preferred.clone());
        vec![NodeAction::ProposeToBase(cfg.preferred.clone())]
    }

    pub fn pa_on_base_message_observed(&mut self, cfg: &OptimizerConfig) -> Vec<NodeAction> {
        self.state.base_seen = true;
        if self.state.phase == ProofAwarePhase::FastDecided {
            self.join_base(cfg)
        } else {
            Vec::new()
        }
    }

    pub fn pa_on_base_decision(&mut self, cfg: &OptimizerConfig, u: ValuePayload) -> Result<Vec<NodeAction>, NodeError> {
        match self.state.phase {
            ProofAwarePhase::InBase => {
                self.state.phase = ProofAwarePhase::Done;
                self.state.decision = Some(u.clone());
                Ok(vec![NodeAction::Decide(u, DecisionPath::Base)])
            }
            ProofAwarePhase::FastDecided if self.state.joined_base => {
                self.state.phase = ProofAwarePhase::Done;
                if u != cfg.preferred.val {
                    return Err(NodeError::ConsistencyViolation {
                        node: self.id,
                        fast: cfg.preferred.val.clone(),
                        base: u,
                    });
                }
                Ok(Vec::new())
            }
            other => Err(NodeError::PreconditionViolation(format!(
                "base decision delivered to node {} in phase {other:?} without a proposal",
                self.id
            ))),
        }
    }
}

fn check_sender(cfg: &OptimizerConfig, sender: NodeId) -> Result<(), NodeError> {
    if sender.index() >= cfg.n {
        return Err(NodeError::UnknownSender { sender, n: cfg.n });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{val, FailureModel, ValidityTable, Variant};

    fn cfg() -> OptimizerConfig {
        OptimizerConfig::new(4, 1, FullValue::new(val("v"), [7u8; 128]), FailureModel::ByzantineExternal)
            .with_variant(Variant::ProofAware)
    }

    fn t() -> ValidityTable {
        ValidityTable::new()
    }

    fn node(id: usize, v: &str) -> ProofAwareNode {
        ProofAwareNode::new(NodeId(id), FullValue::new(val(v), [1u8; 128]))
    }

    #[test]
    fn start_sends_payload_only() {
        let c = cfg();
        let mut p = node(0, "v");
        let out = p.pa_start(&c, &t()).unwrap();
        assert_eq!(out, vec![NodeAction::Broadcast(Message::Val(val("v")))]);
        assert_eq!(p.state.votes.len(), 1);
        assert!(matches!(p.pa_start(&c, &t()), Err(NodeError::AlreadyStarted(_))));
    }

    #[test]
    fn two_node_self_vote() {
        let c = OptimizerConfig::new(2, 0, FullValue::bare(val("v")), FailureModel::ByzantineExternal)
            .with_variant(Variant::ProofAware);
        let mut p = node(0, "v");
        p.pa_start(&c, &t()).unwrap();
        assert_eq!(p.state.votes.get(NodeId(0)), Some(&val("v")));
    }

    #[test]
    fn fast_decision_without_proofs() {
        let c = cfg();
        let mut p = node(0, "v");
        p.pa_start(&c, &t()).unwrap();
        p.pa_on_val(&c, &t(), NodeId(1), val("v")).unwrap();
        let out = p.pa_on_val(&c, &t(), NodeId(2), val("v")).unwrap();
        assert_eq!(out, vec![NodeAction::Decide(val("v"), DecisionPath::Fast)]);
        assert!(!p.state.broadcast_full);
    }

    #[test]
    fn mixed_votes_trigger_full_exchange() {
        let c = cfg();
        let mut p = node(0, "v");
        p.pa_start(&c, &t()).unwrap();
        p.pa_on_val(&c, &t(), NodeId(1), val("v")).unwrap();
        let out = p.pa_on_val(&c, &t(), NodeId(2), val("u")).unwrap();
        assert_eq!(out, vec![NodeAction::Broadcast(Message::Full(p.state.my_value.clone()))]);
        assert_eq!(p.phase(), ProofAwarePhase::FullExchange);
        assert!(p.state.fullvals.contains_key(&NodeId(0)));
        // Duplicate first-round vote ignored.
        assert!(p.pa_on_val(&c, &t(), NodeId(2), val("v")).unwrap().is_empty());
    }

    #[test]
    fn fast_decided_node_replies_once() {
        let c = cfg();
        let mut p = node(0, "v");
        p.pa_start(&c, &t()).unwrap();
        p.pa_on_val(&c, &t(), NodeId(1), val("v")).unwrap();
        p.pa_on_val(&c, &t(), NodeId(2), val("v")).unwrap();
        let q_full = FullValue::new(val("u"), b"pq");
        let out = p.pa_on_full(&c, &t(), NodeId(3), q_full.clone()).unwrap();
        assert_eq!(out, vec![NodeAction::SendTo(NodeId(3), Message::Full(p.state.my_value.clone()))]);
        assert!(p.pa_on_full(&c, &t(), NodeId(3), FullValue::bare(val("v"))).unwrap().is_empty());
        assert_eq!(p.state.fullvals.get(&NodeId(3)), Some(&q_full));
    }

    #[test]
    fn full_exchange_adopts_valid_preferred() {
        let c = cfg();
        let mut p = node(0, "u");
        p.pa_start(&c, &t()).unwrap();
        p.pa_on_val(&c, &t(), NodeId(1), val("u")).unwrap();
        p.pa_on_val(&c, &t(), NodeId(2), val("v")).unwrap();
        assert!(p.pa_on_full(&c, &t(), NodeId(1), FullValue::bare(val("u"))).unwrap().is_empty());
        let out = p.pa_on_full(&c, &t(), NodeId(2), FullValue::bare(val("v"))).unwrap();
        assert_eq!(out, vec![NodeAction::ProposeToBase(c.preferred.clone())]);
        assert_eq!(p.phase(), ProofAwarePhase::InBase);
    }

    #[test]
    fn full_exchange_keeps_own_without_preferred() {
        let c = cfg();
        let bad = ValidityTable::new().with(val("v"), false);
        let mut p = node(0, "u");
        p.pa_start(&c, &bad).unwrap();
        p.pa_on_val(&c, &bad, NodeId(1), val("u")).unwrap();
        p.pa_on_val(&c, &bad, NodeId(2), val("v")).unwrap();
        p.pa_on_full(&c, &bad, NodeId(1), FullValue::bare(val("u"))).unwrap();
        let out = p.pa_on_full(&c, &bad, NodeId(2), FullValue::bare(val("v"))).unwrap();
        assert_eq!(out, vec![NodeAction::ProposeToBase(p.state.my_value.clone())]);
    }

    #[test]
    fn early_full_values_count_once_exchange_starts() {
        let c = cfg();
        let mut p = node(0, "u");
        p.pa_start(&c, &t()).unwrap();
        let out = p.pa_on_full(&c, &t(), NodeId(1), FullValue::bare(val("v"))).unwrap();
        assert_eq!(out.len(), 1, "reply while still in the first phase");
        p.pa_on_full(&c, &t(), NodeId(2), FullValue::bare(val("u"))).unwrap();
        p.pa_on_val(&c, &t(), NodeId(1), val("v")).unwrap();
        let out = p.pa_on_val(&c, &t(), NodeId(2), val("u")).unwrap();
        assert_eq!(
            out,
            vec![
                NodeAction::Broadcast(Message::Full(p.state.my_value.clone())),
                NodeAction::ProposeToBase(c.preferred.clone())
            ]
        );
    }

    #[test]
    fn base_join_and_decision() {
        let c = cfg();
        let mut p = node(0, "v");
        p.pa_start(&c, &t()).unwrap();
        p.pa_on_val(&c, &t(), NodeId(1), val("v")).unwrap();
        p.pa_on_val(&c, &t(), NodeId(2), val("v")).unwrap();
        assert_eq!(p.pa_on_base_message_observed(&c), vec![NodeAction::ProposeToBase(c.preferred.clone())]);
        assert!(p.pa_on_base_message_observed(&c).is_empty());
        assert!(p.pa_on_base_decision(&c, val("v")).unwrap().is_empty());
        assert_eq!(p.phase(), ProofAwarePhase::Done);

        let mut q = node(1, "u");
        q.pa_start(&c, &t()).unwrap();
        q.pa_on_val(&c, &t(), NodeId(0), val("u")).unwrap();
        q.pa_on_val(&c, &t(), NodeId(2), val("u")).unwrap();
        q.pa_on_full(&c, &t(), NodeId(0), FullValue::bare(val("u"))).unwrap();
        q.pa_on_full(&c, &t(), NodeId(2), FullValue::bare(val("u"))).unwrap();
        assert_eq!(q.phase(), ProofAwarePhase::InBase);
        assert_eq!(
            q.pa_on_base_decision(&c, val("v")).unwrap(),
            vec![NodeAction::Decide(val("v"), DecisionPath::Base)]
        );
    }

    #[test]
    fn unknown_sender() {
        let c = cfg();
        let mut p = node(0, "v");
        assert!(matches!(
            p.pa_on_full(&c, &t(), NodeId(9), FullValue::bare(val("v"))),
            Err(NodeError::UnknownSender { .. })
        ));
    }
}
