use std::hash::{Hash, Hasher};

use super::envelope::WireMessage;
use super::scenario::ByzantineStrategy;
use crate::optimizer::{NodeAction, NodeError, OptimizerNode, Phase};
use crate::proof_aware::{ProofAwareNode, ProofAwarePhase};
use crate::types::{FullValue, NodeId, OptimizerConfig, ValidityPredicate, ValuePayload, Variant};

/// Either honest state machine behind one interface.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Honest {
    Oblivious(OptimizerNode),
    Aware(ProofAwareNode),
}

/// Coarse phase shared by both machines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Collecting,
    FastDecided,
    InBase,
    Done,
}

impl Honest {
    pub fn new(cfg: &OptimizerConfig, id: NodeId, value: FullValue) -> Self {
        match cfg.variant {
            Variant::ProofOblivious => Honest::Oblivious(OptimizerNode::new(id, value)),
            Variant::ProofAware => Honest::Aware(ProofAwareNode::new(id, value)),
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            Honest::Oblivious(n) => match n.phase() {
                Phase::Collecting => Stage::Collecting,
                Phase::FastDecided => Stage::FastDecided,
                Phase::InBase => Stage::InBase,
                Phase::Done => Stage::Done,
            },
            Honest::Aware(n) => match n.phase() {
                ProofAwarePhase::Phase1 | ProofAwarePhase::FullExchange => Stage::Collecting,
                ProofAwarePhase::FastDecided => Stage::FastDecided,
                ProofAwarePhase::InBase => Stage::InBase,
                ProofAwarePhase::Done => Stage::Done,
            },
        }
    }

    pub fn joined_base(&self) -> bool {
        match self {
            Honest::Oblivious(n) => n.state.joined_base,
            Honest::Aware(n) => n.state.joined_base,
        }
    }

    fn base_seen(&self) -> bool {
        match self {
            Honest::Oblivious(n) => n.state.base_seen,
            Honest::Aware(n) => n.state.base_seen,
        }
    }

    pub fn vote_count(&self) -> usize {
        match self {
            Honest::Oblivious(n) => n.state.votes.len(),
            Honest::Aware(n) => n.state.votes.len(),
        }
    }

    pub fn start(&mut self, cfg: &OptimizerConfig, valid: &dyn ValidityPredicate) -> Result<Vec<NodeAction>, NodeError> {
        match self {
            Honest::Oblivious(n) => n.start(cfg, valid),
            Honest::Aware(n) => n.pa_start(cfg, valid),
        }
    }

    pub fn on_message(
        &mut self,
        cfg: &OptimizerConfig,
        valid: &dyn ValidityPredicate,
        from: NodeId,
        msg: &WireMessage,
    ) -> Result<Vec<NodeAction>, NodeError> {
        match (self, msg) {
            (Honest::Oblivious(n), WireMessage::Val(v)) => n.on_proposal(cfg, valid, from, v.clone()),
            (Honest::Oblivious(n), WireMessage::Full(fv)) => n.on_proposal(cfg, valid, from, fv.val.clone()),
            (Honest::Oblivious(n), WireMessage::Base(_)) => Ok(n.on_base_message_observed(cfg)),
            (Honest::Oblivious(n), WireMessage::Timer) => {
                if n.phase() == Phase::Collecting {
                    n.sync_variant_evaluate(cfg)
                } else {
                    Ok(Vec::new())
                }
            }
            (Honest::Aware(n), WireMessage::Val(v)) => n.pa_on_val(cfg, valid, from, v.clone()),
            (Honest::Aware(n), WireMessage::Full(fv)) => n.pa_on_full(cfg, valid, from, fv.clone()),
            (Honest::Aware(n), WireMessage::Base(_)) => Ok(n.pa_on_base_message_observed(cfg)),
            (Honest::Aware(_), WireMessage::Timer) => Ok(Vec::new()),
        }
    }

    pub fn on_base_decision(&mut self, cfg: &OptimizerConfig, u: ValuePayload) -> Result<Vec<NodeAction>, NodeError> {
        match self {
            Honest::Oblivious(n) => n.on_base_decision(cfg, u),
            Honest::Aware(n) => n.pa_on_base_decision(cfg, u),
        }
    }

    /// Hashes what can still influence the node. The vote set and the
    /// base-traffic flag stop mattering once collection ends.
    pub fn hash_behavior<H: Hasher>(&self, h: &mut H) {
        match self {
            Honest::Oblivious(n) => {
                let st = &n.state;
                (n.id, st.phase, &st.my_value, st.started, st.joined_base, &st.decision, &st.proposed).hash(h);
                if st.phase == Phase::Collecting {
                    (&st.votes, st.base_seen).hash(h);
                }
            }
            Honest::Aware(n) => n.hash(h),
        }
    }

    /// True when delivering `msg` from `from` now cannot change anything the
    /// node will ever do.
    pub fn is_inert(&self, from: NodeId, msg: &WireMessage) -> bool {
        let stage = self.stage();
        match msg {
            WireMessage::Base(_) => self.base_seen() || self.joined_base() || matches!(stage, Stage::InBase | Stage::Done),
            WireMessage::Timer => stage != Stage::Collecting,
            WireMessage::Val(_) | WireMessage::Full(_) => match self {
                Honest::Oblivious(n) => n.phase() != Phase::Collecting || n.state.votes.contains(from),
                Honest::Aware(n) => {
                    let st = &n.state;
                    match msg {
                        WireMessage::Val(_) => st.phase != ProofAwarePhase::Phase1 || st.votes.contains(from),
                        _ => {
                            from == n.id
                                || (st.fullvals.contains_key(&from) && (st.broadcast_full || st.replied_to.contains(&from)))
                                || (st.broadcast_full && matches!(st.phase, ProofAwarePhase::InBase | ProofAwarePhase::Done))
                        }
                    }
                }
            },
        }
    }
}

/// What occupies a node slot in the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Machine {
    Honest(Honest),
    Byzantine {
        strategy: ByzantineStrategy,
        /// Internal honest machine of a `MimicHonest` node.
        mimic: Option<Honest>,
    },
}

impl Machine {
    pub fn honest(&self) -> Option<&Honest> {
        match self {
            Machine::Honest(h) => Some(h),
            Machine::Byzantine { mimic, .. } => mimic.as_ref(),
        }
    }

    pub fn hash_behavior<H: Hasher>(&self, h: &mut H) {
        match self {
            Machine::Honest(x) => x.hash_behavior(h),
            Machine::Byzantine { strategy, mimic } => {
                strategy.hash(h);
                if let Some(x) = mimic {
                    x.hash_behavior(h);
                }
            }
        }
    }

    pub fn honest_mut(&mut self) -> Option<&mut Honest> {
        match self {
            Machine::Honest(h) => Some(h),
            Machine::Byzantine { mimic, .. } => mimic.as_mut(),
        }
    }
}
