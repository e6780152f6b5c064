use super::envelope::{BaseMessage, MessageKind, Outgoing, WireMessage};
use super::node::Honest;
use super::scenario::{ByzantineStrategy, ScriptedSend};
use super::SimError;
use crate::base::{KingMsg, PhaseKing, RoundMsg};
use crate::optimizer::NodeAction;
use crate::types::{FailureModel, FullValue, NodeId, OptimizerConfig, ValidityPredicate, ValuePayload, Variant};

/// What a strategy may look at when producing its first-round messages.
pub struct EmitContext<'a> {
    pub cfg: &'a OptimizerConfig,
    pub valid: &'a dyn ValidityPredicate,
}

/// The full value a Byzantine node attaches to `v`: the preferred proof for
/// the preferred value, no proof otherwise.
pub(crate) fn full_for(cfg: &OptimizerConfig, v: &ValuePayload) -> FullValue {
    if *v == cfg.preferred.val {
        cfg.preferred.clone()
    } else {
        FullValue::bare(v.clone())
    }
}

/// First-round envelopes produced by a Byzantine strategy.
pub fn byzantine_emit(node: NodeId, strategy: &ByzantineStrategy, cx: &EmitContext<'_>) -> Result<Vec<Outgoing>, SimError> {
    let n = cx.cfg.n;
    let others = (0..n).map(NodeId).filter(move |j| *j != node);
    Ok(match strategy {
        ByzantineStrategy::Silent => Vec::new(),
        ByzantineStrategy::Equivocate { x, y, targets } => others
            .flat_map(|to| {
                let v = if targets.contains(&to) { x } else { y };
                let mut out = vec![Outgoing { from: node, to, msg: WireMessage::Val(v.clone()) }];
                if cx.cfg.variant == Variant::ProofAware {
                    out.push(Outgoing { from: node, to, msg: WireMessage::Full(full_for(cx.cfg, v)) });
                }
                out
            })
            .collect(),
        ByzantineStrategy::MimicHonest(w) => {
            let mut honest = Honest::new(cx.cfg, node, full_for(cx.cfg, w));
            let actions = honest.start(cx.cfg, cx.valid).map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
            expand_sends(node, n, &actions)
        }
        ByzantineStrategy::ArbitraryScript(sends) => {
            let mut out = Vec::with_capacity(sends.len());
            for s in sends {
                if s.from != node {
                    return Err(SimError::ImpersonationAttempt { node, claimed: s.from });
                }
                out.push(scripted_outgoing(cx.cfg, s)?);
            }
            out
        }
    })
}

pub(crate) fn scripted_outgoing(cfg: &OptimizerConfig, s: &ScriptedSend) -> Result<Outgoing, SimError> {
    let msg = match s.kind {
        MessageKind::Val => WireMessage::Val(s.val.clone()),
        MessageKind::Full => WireMessage::Full(full_for(cfg, &s.val)),
        MessageKind::Base => WireMessage::Base(BaseMessage::Announce(s.val.clone())),
        MessageKind::Timer => return Err(SimError::ScenarioInvalid("a script cannot send timer events".into())),
    };
    Ok(Outgoing { from: s.from, to: s.to, msg })
}

/// Network sends contained in a list of node actions.
pub(crate) fn expand_sends(node: NodeId, n: usize, actions: &[NodeAction]) -> Vec<Outgoing> {
    let mut out = Vec::new();
    for a in actions {
        match a {
            NodeAction::Broadcast(m) => out.extend(
                (0..n)
                    .map(NodeId)
                    .filter(|j| *j != node)
                    .map(|to| Outgoing { from: node, to, msg: m.clone().into() }),
            ),
            NodeAction::SendTo(to, m) => out.push(Outgoing { from: node, to: *to, msg: m.clone().into() }),
            NodeAction::ProposeToBase(_) | NodeAction::Decide(..) => {}
        }
    }
    out
}

/// Round message an equivocating node sends to `to` in a concrete base run.
pub(crate) fn equivocate_round(
    model: FailureModel,
    node: NodeId,
    round: usize,
    to: NodeId,
    x: &ValuePayload,
    y: &ValuePayload,
    targets: &std::collections::BTreeSet<NodeId>,
) -> Option<RoundMsg> {
    let v = if targets.contains(&to) { x } else { y }.clone();
    if model == FailureModel::Benign {
        return Some(RoundMsg::Flood([v].into()));
    }
    Some(RoundMsg::King(match round % 3 {
        0 => KingMsg::Value(v),
        1 => KingMsg::Propose(v),
        _ if PhaseKing::king_of(round) == node => KingMsg::King(v),
        _ => return None,
    }))
}
