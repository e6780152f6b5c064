use serde::Serialize;

use super::envelope::{Envelope, WireMessage};
use super::invariants::Violation;
use crate::optimizer::{DecisionPath, DecisionRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct KindCounter {
    pub messages: u64,
    pub payload_bytes: u64,
    pub proof_bytes: u64,
}

impl KindCounter {
    pub fn total_bytes(&self) -> u64 {
        self.payload_bytes + self.proof_bytes
    }
}

/// Traffic sent, per message kind. Sends to crashed nodes are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub val: KindCounter,
    pub full: KindCounter,
    pub base: KindCounter,
}

impl Counters {
    pub fn record(&mut self, msg: &WireMessage) {
        let c = match msg {
            WireMessage::Val(_) => &mut self.val,
            WireMessage::Full(_) => &mut self.full,
            WireMessage::Base(_) => &mut self.base,
            WireMessage::Timer => return,
        };
        c.messages += 1;
        c.payload_bytes += msg.payload_bytes() as u64;
        c.proof_bytes += msg.proof_bytes() as u64;
    }

    pub fn payload_bytes(&self) -> u64 {
        self.val.payload_bytes + self.full.payload_bytes + self.base.payload_bytes
    }

    pub fn proof_bytes(&self) -> u64 {
        self.val.proof_bytes + self.full.proof_bytes + self.base.proof_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.payload_bytes() + self.proof_bytes()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventRecord {
    Crash,
    Start,
    Deliver {
        seq: u64,
        from: usize,
        to: usize,
        msg_kind: String,
        msg: String,
        send_index: u64,
    },
    Drop {
        seq: u64,
        from: usize,
        to: usize,
        msg_kind: String,
        msg: String,
    },
    /// Adversary picked the base decision among the legal values.
    BaseChoice { legal: Vec<String>, chosen: String },
    /// The base decision reached one proposer.
    BaseDecision { value: String },
    /// The simulator switched scheduling mode.
    ModeSwitch { mode: String },
    RoundEnd { round: usize },
    /// A Byzantine send under a forged identity was refused.
    Rejected { claimed_from: usize, to: usize },
}

impl EventRecord {
    pub fn deliver(e: &Envelope) -> Self {
        EventRecord::Deliver {
            seq: e.seq,
            from: e.from.0,
            to: e.to.0,
            msg_kind: e.kind().to_string(),
            msg: e.msg.describe(),
            send_index: e.send_index,
        }
    }

    pub fn drop(e: &Envelope) -> Self {
        EventRecord::Drop {
            seq: e.seq,
            from: e.from.0,
            to: e.to.0,
            msg_kind: e.kind().to_string(),
            msg: e.msg.describe(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum ActionRecord {
    Send { to: Vec<usize>, msg_kind: String, msg: String },
    Propose { value: String, proof_bytes: usize },
    Decide { value: String, path: DecisionPath, rounds: u32 },
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub name: String,
    pub n: usize,
    pub f: usize,
    pub model: String,
    pub variant: String,
    pub timeout_mode: bool,
    pub base: String,
    pub straw_man: bool,
    pub schedule: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TraceLine {
    Meta(Meta),
    Event {
        index: u64,
        node: Option<usize>,
        event: EventRecord,
        actions: Vec<ActionRecord>,
    },
    Decision(DecisionRecord),
    Counters(Counters),
    Outcome {
        events: u64,
        violations: Vec<Violation>,
    },
}

/// Line-delimited record of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub lines: Vec<TraceLine>,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("trace lines serialize"));
            out.push('\n');
        }
        out
    }

    pub fn events(&self) -> impl Iterator<Item = (&EventRecord, &[ActionRecord])> {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Event { event, actions, .. } => Some((event, actions.as_slice())),
            _ => None,
        })
    }

    pub fn counters(&self) -> Option<&Counters> {
        self.lines.iter().find_map(|l| match l {
            TraceLine::Counters(c) => Some(c),
            _ => None,
        })
    }

    pub fn decisions(&self) -> Vec<&DecisionRecord> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                TraceLine::Decision(d) => Some(d),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ValuePayload;

    #[test]
    fn counters_split_by_kind() {
        let v = ValuePayload::from_text("abc").unwrap();
        let mut c = Counters::default();
        c.record(&WireMessage::Val(v.clone()));
        c.record(&WireMessage::Full(crate::types::FullValue::new(v.clone(), [0u8; 10])));
        c.record(&WireMessage::Timer);
        assert_eq!(c.val, KindCounter { messages: 1, payload_bytes: 3, proof_bytes: 0 });
        assert_eq!(c.full, KindCounter { messages: 1, payload_bytes: 3, proof_bytes: 10 });
        assert_eq!(c.base.messages, 0);
        assert_eq!((c.payload_bytes(), c.proof_bytes(), c.total_bytes()), (6, 10, 16));
    }

    #[test]
    fn jsonl_has_one_object_per_line() {
        let t = Trace {
            lines: vec![TraceLine::Counters(Counters::default()), TraceLine::Outcome { events: 4, violations: Vec::new() }],
        };
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        for line in text.lines() {
            assert!(serde_json::from_str::<serde_json::Value>(line).unwrap().is_object());
        }
        assert_eq!(t.counters(), Some(&Counters::default()));
        assert!(t.decisions().is_empty());
    }
}
