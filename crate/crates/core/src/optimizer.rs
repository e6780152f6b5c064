//! Per-node state machine of the generic v-biased optimizer.
//!
//! A node broadcasts its proposal, waits for `n - f` first-round votes
//! (its own included) and then either decides the preferred value on the
//! spot, or hands the preferred value or its own value to the base
//! consensus. A node that decided on the fast path joins the base protocol
//! with the preferred value once it learns the base protocol is running.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adoption::{adopts, count_of, AdoptionError, VoteSet};
use crate::types::{FullValue, NodeId, OptimizerConfig, ValidityPredicate, ValuePayload, Variant};

/// Wire message produced by the optimizer state machines.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Message {
    /// First-round vote carrying only the value payload.
    Val(ValuePayload),
    /// A value together with its proof.
    Full(FullValue),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionPath {
    Fast,
    Base,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeAction {
    Broadcast(Message),
    SendTo(NodeId, Message),
    ProposeToBase(FullValue),
    Decide(ValuePayload, DecisionPath),
}

/// A node's decision as recorded by the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub node: NodeId,
    pub value: ValuePayload,
    pub path: DecisionPath,
    pub event_index: u64,
    pub rounds: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Collecting,
    FastDecided,
    InBase,
    Done,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NodeError {
    #[error("node {0} already started")]
    AlreadyStarted(NodeId),
    #[error("message from unknown sender {sender} (n = {n})")]
    UnknownSender { sender: NodeId, n: usize },
    #[error("node {node} decided {fast} on the fast path but the base protocol decided {base}")]
    ConsistencyViolation {
        node: NodeId,
        fast: ValuePayload,
        base: ValuePayload,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error(transparent)]
    Adoption(#[from] AdoptionError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OptimizerState {
    pub phase: Phase,
    pub my_value: FullValue,
    pub votes: VoteSet,
    pub started: bool,
    pub joined_base: bool,
    /// Base-protocol traffic has been observed at least once.
    pub base_seen: bool,
    pub decision: Option<ValuePayload>,
    pub proposed: Option<FullValue>,
}

/// Node running the proof-oblivious optimizer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OptimizerNode {
    pub id: NodeId,
    pub state: OptimizerState,
}

impl OptimizerNode {
    pub fn new(id: NodeId, my_value: FullValue) -> Self {
        OptimizerNode {
            id,
            state: OptimizerState {
                phase: Phase::Collecting,
                my_value,
                votes: VoteSet::new(),
                started: false,
                joined_base: false,
                base_seen: false,
                decision: None,
                proposed: None,
            },
        }
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn start(&mut self, cfg: &OptimizerConfig, valid: &dyn ValidityPredicate) -> Result<Vec<NodeAction>, NodeError> {
        let st = &mut self.state;
        if st.started {
            return Err(NodeError::AlreadyStarted(self.id));
        }
        st.started = true;
        let msg = match cfg.variant {
            Variant::ProofOblivious => Message::Val(st.my_value.val.clone()),
            Variant::ProofAware => Message::Full(st.my_value.clone()),
        };
        st.votes.insert(self.id, st.my_value.val.clone());
        let mut out = vec![NodeAction::Broadcast(msg)];
        // n - f may already be met by the self-vote (n = 2, f = 1 style configs).
        out.extend(self.maybe_evaluate(cfg, valid)?);
        Ok(out)
    }

    pub fn on_proposal(
        &mut self,
        cfg: &OptimizerConfig,
        valid: &dyn ValidityPredicate,
        sender: NodeId,
        val: ValuePayload,
    ) -> Result<Vec<NodeAction>, NodeError> {
        if sender.index() >= cfg.n {
            return Err(NodeError::UnknownSender { sender, n: cfg.n });
        }
        if !self.state.votes.insert(sender, val) {
            return Ok(Vec::new());
        }
        if !self.state.started {
            return Ok(Vec::new());
        }
        self.maybe_evaluate(cfg, valid)
    }

    fn maybe_evaluate(&mut self, cfg: &OptimizerConfig, valid: &dyn ValidityPredicate) -> Result<Vec<NodeAction>, NodeError> {
        if self.state.phase != Phase::Collecting {
            return Ok(Vec::new());
        }
        if cfg.is_sync_variant() {
            // The timeout mode evaluates early only when every vote is in.
            if self.state.votes.len() == cfg.n {
                return self.sync_variant_evaluate(cfg);
            }
            return Ok(Vec::new());
        }
        if self.state.votes.len() < cfg.quorum() {
            return Ok(Vec::new());
        }
        let preferred = &cfg.preferred;
        if self.state.votes.unanimous_for(&preferred.val) {
            return Ok(self.fast_decide(cfg));
        }
        let value = if adopts(cfg, &self.state.votes, valid)? {
            preferred.clone()
        } else {
            self.state.my_value.clone()
        };
        Ok(self.enter_base(value))
    }

    fn fast_decide(&mut self, cfg: &OptimizerConfig) -> Vec<NodeAction> {
        let st = &mut self.state;
        st.phase = Phase::FastDecided;
        st.decision = Some(cfg.preferred.val.clone());
        let mut out = vec![NodeAction::Decide(cfg.preferred.val.clone(), DecisionPath::Fast)];
        if st.base_seen {
            out.extend(self.join_base(cfg));
        }
        out
    }

    fn enter_base(&mut self, value: FullValue) -> Vec<NodeAction> {
        self.state.phase = Phase::InBase;
        self.state.proposed = Some(value.clone());
        vec![NodeAction::ProposeToBase(value)]
    }

    fn join_base(&mut self, cfg: &OptimizerConfig) -> Vec<NodeAction> {
        if self.state.joined_base {
            return Vec::new();
        }
        self.state.joined_base = true;
        self.state.proposed = Some(cfg.preferred.clone());
        vec![NodeAction::ProposeToBase(cfg.preferred.clone())]
    }

    /// A base-consensus message reached this node. Only a fast-decided node
    /// reacts, and only once; earlier observations are remembered so a later
    /// fast decision joins immediately.
    pub fn on_base_message_observed(&mut self, cfg: &OptimizerConfig) -> Vec<NodeAction> {
        self.state.base_seen = true;
        if self.state.phase == Phase::FastDecided {
            self.join_base(cfg)
        } else {
            Vec::new()
        }
    }

    pub fn on_base_decision(&mut self, cfg: &OptimizerConfig, u: ValuePayload) -> Result<Vec<NodeAction>, NodeError> {
        match self.state.phase {
            Phase::InBase => {
                self.state.phase = Phase::Done;
                self.state.decision = Some(u.clone());
                Ok(vec![NodeAction::Decide(u, DecisionPath::Base)])
            }
            Phase::FastDecided if self.state.joined_base => {
                self.state.phase = Phase::Done;
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

    /// Timeout-mode evaluation: decide only on `n` unanimous votes, adopt on
    /// `f + 1` copies.
    pub fn sync_variant_evaluate(&mut self, cfg: &OptimizerConfig) -> Result<Vec<NodeAction>, NodeError> {
        if !cfg.is_sync_variant() {
            return Err(NodeError::PreconditionViolation("timeout mode is not enabled".into()));
        }
        if self.state.phase != Phase::Collecting {
            return Ok(Vec::new());
        }
        let have = self.state.votes.len();
        if have < cfg.quorum() {
            return Err(NodeError::PreconditionViolation(format!(
                "timeout fired with {have} votes, need {}",
                cfg.quorum()
            )));
        }
        let preferred = &cfg.preferred;
        if have == cfg.n && self.state.votes.unanimous_for(&preferred.val) {
            return Ok(self.fast_decide(cfg));
        }
        let value = if count_of(&self.state.votes, &preferred.val) > cfg.f {
            preferred.clone()
        } else {
            self.state.my_value.clone()
        };
        Ok(self.enter_base(value))
    }
}
