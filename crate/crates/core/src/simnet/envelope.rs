use std::fmt;

use serde::{Deserialize, Serialize};

use crate::base::RoundMsg;
use crate::optimizer::Message;
use crate::types::{FullValue, NodeId, ValuePayload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    /// First-round vote (value payload only).
    Val,
    /// Value with proof.
    Full,
    /// Any base-consensus traffic.
    Base,
    /// Local timeout of the synchronous evaluation mode.
    Timer,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Val => "val",
            MessageKind::Full => "full",
            MessageKind::Base => "base",
            MessageKind::Timer => "timer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "val" => MessageKind::Val,
            "full" => MessageKind::Full,
            "base" => MessageKind::Base,
            "timer" => MessageKind::Timer,
            _ => return None,
        })
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseMessage {
    /// Announcement that the sender invoked the base protocol with a value.
    Announce(ValuePayload),
    /// A message of a concrete synchronous base protocol.
    Round { round: usize, msg: RoundMsg },
}

/// Everything that can travel between simulated nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WireMessage {
    Val(ValuePayload),
    Full(FullValue),
    Base(BaseMessage),
    Timer,
}

impl From<Message> for WireMessage {
    fn from(m: Message) -> Self {
        match m {
            Message::Val(v) => WireMessage::Val(v),
            Message::Full(v) => WireMessage::Full(v),
        }
    }
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            WireMessage::Val(_) => MessageKind::Val,
            WireMessage::Full(_) => MessageKind::Full,
            WireMessage::Base(_) => MessageKind::Base,
            WireMessage::Timer => MessageKind::Timer,
        }
    }

    /// The value payload used to match scripted steps, when there is one.
    pub fn key_value(&self) -> Option<&ValuePayload> {
        match self {
            WireMessage::Val(v) => Some(v),
            WireMessage::Full(fv) => Some(&fv.val),
            WireMessage::Base(BaseMessage::Announce(v)) => Some(v),
            WireMessage::Base(BaseMessage::Round { .. }) | WireMessage::Timer => None,
        }
    }

    /// Bytes of value payload carried.
    pub fn payload_bytes(&self) -> usize {
        match self {
            WireMessage::Val(v) => v.len(),
            WireMessage::Full(fv) => fv.val.len(),
            WireMessage::Base(BaseMessage::Announce(v)) => v.len(),
            WireMessage::Base(BaseMessage::Round { msg, .. }) => msg.byte_len(),
            WireMessage::Timer => 0,
        }
    }

    /// Bytes of proof carried.
    pub fn proof_bytes(&self) -> usize {
        match self {
            WireMessage::Full(fv) => fv.proof().len(),
            _ => 0,
        }
    }

    /// Stable one-line rendering used in traces.
    pub fn describe(&self) -> String {
        match self {
            WireMessage::Val(v) => v.to_text(),
            WireMessage::Full(fv) => format!("{}+proof[{}]", fv.val, fv.proof().len()),
            WireMessage::Base(BaseMessage::Announce(v)) => format!("announce {v}"),
            WireMessage::Base(BaseMessage::Round { round, msg }) => match msg {
                RoundMsg::Flood(set) => {
                    let vals: Vec<String> = set.iter().map(|v| v.to_text()).collect();
                    format!("r{round} flood [{}]", vals.join(","))
                }
                RoundMsg::King(m) => {
                    let tag = match m {
                        crate::base::KingMsg::Value(_) => "value",
                        crate::base::KingMsg::Propose(_) => "propose",
                        crate::base::KingMsg::King(_) => "king",
                    };
                    format!("r{round} {tag} {}", m.value())
                }
            },
            WireMessage::Timer => "timeout".to_string(),
        }
    }
}

/// A message in flight. `from` is always the true sender.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Envelope {
    pub seq: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub msg: WireMessage,
    /// Position among everything the sender has sent; stable across schedules.
    pub origin: u32,
    pub send_index: u64,
    /// Causal depth: one more than the sender's depth at send time.
    pub depth: u32,
}

impl Envelope {
    pub fn kind(&self) -> MessageKind {
        self.msg.kind()
    }
}

/// A message a node wants sent, before the simulator assigns a sequence number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: WireMessage,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kinds_parse_back() {
        for k in [MessageKind::Val, MessageKind::Full, MessageKind::Base, MessageKind::Timer] {
            assert_eq!(MessageKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(MessageKind::parse("vote"), None);
    }

    #[test]
    fn timer_carries_nothing() {
        assert_eq!(WireMessage::Timer.payload_bytes(), 0);
        assert_eq!(WireMessage::Timer.proof_bytes(), 0);
        assert_eq!(WireMessage::Timer.key_value(), None);
    }

    proptest! {
        #[test]
        fn byte_counts_match_the_parts(val in proptest::collection::vec(any::<u8>(), 1..40), proof in proptest::collection::vec(any::<u8>(), 0..200)) {
            let p = ValuePayload::new(&val).unwrap();
            let full = WireMessage::Full(FullValue::new(p.clone(), &proof));
            prop_assert_eq!(full.payload_bytes(), val.len());
            prop_assert_eq!(full.proof_bytes(), proof.len());
            prop_assert_eq!(full.key_value(), Some(&p));
            let bare = WireMessage::Val(p.clone());
            prop_assert_eq!(bare.payload_bytes(), val.len());
            prop_assert_eq!(bare.proof_bytes(), 0);
            let ann = WireMessage::Base(BaseMessage::Announce(p));
            prop_assert_eq!(ann.payload_bytes(), val.len());
            prop_assert_eq!(ann.kind(), MessageKind::Base);
        }
    }
}
