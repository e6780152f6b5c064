use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::envelope::MessageKind;
use super::SimError;
use crate::types::{validate_config, FailureModel, FullValue, NodeId, OptimizerConfig, ValidityTable, ValuePayload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ByzantineStrategy {
    Silent,
    /// Sends `x` to every node in `targets` and `y` to everyone else.
    Equivocate {
        x: ValuePayload,
        y: ValuePayload,
        targets: BTreeSet<NodeId>,
    },
    /// Runs the honest protocol with initial value `w`.
    MimicHonest(ValuePayload),
    /// Fixed list of first-round sends. A `from` other than the node itself
    /// is an impersonation attempt and is rejected.
    ArbitraryScript(Vec<ScriptedSend>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScriptedSend {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MessageKind,
    pub val: ValuePayload,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Fault {
    Correct,
    /// Crashes before the event with this index is processed.
    CrashAt(u64),
    Byzantine(ByzantineStrategy),
}

impl Fault {
    pub fn is_correct(&self) -> bool {
        matches!(self, Fault::Correct)
    }

    pub fn is_byzantine(&self) -> bool {
        matches!(self, Fault::Byzantine(_))
    }
}

/// One adversary decision in a scripted schedule.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ScriptStep {
    /// Deliver the oldest pending envelope matching the pattern.
    Deliver {
        from: NodeId,
        to: NodeId,
        kind: MessageKind,
        val: Option<ValuePayload>,
    },
    /// Discard the oldest matching envelope of a crashed sender.
    Drop {
        from: NodeId,
        to: NodeId,
        kind: MessageKind,
        val: Option<ValuePayload>,
    },
    /// Pick the base decision among the legal values.
    Base(ValuePayload),
}

impl fmt::Display for ScriptStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptStep::Deliver { from, to, kind, val } | ScriptStep::Drop { from, to, kind, val } => {
                let verb = if matches!(self, ScriptStep::Deliver { .. }) { "deliver" } else { "drop" };
                write!(f, "{verb} {from}->{to} {kind}")?;
                if let Some(v) = val {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
            ScriptStep::Base(v) => write!(f, "base {v}"),
        }
    }
}

impl FromStr for ScriptStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let bad = || format!("malformed script step {s:?}");
        match parts.as_slice() {
            ["base", v] => Ok(ScriptStep::Base(ValuePayload::from_text(v).map_err(|e| e.to_string())?)),
            [verb @ ("deliver" | "drop"), route, kind, rest @ ..] if rest.len() <= 1 => {
                let (from, to) = route.split_once("->").ok_or_else(bad)?;
                let from = NodeId(from.parse().map_err(|_| bad())?);
                let to = NodeId(to.parse().map_err(|_| bad())?);
                let kind = MessageKind::parse(kind).ok_or_else(bad)?;
                let val = match rest.first() {
                    Some(v) => Some(ValuePayload::from_text(v).map_err(|e| e.to_string())?),
                    None => None,
                };
                Ok(if *verb == "deliver" {
                    ScriptStep::Deliver { from, to, kind, val }
                } else {
                    ScriptStep::Drop { from, to, kind, val }
                })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for ScriptStep {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScriptStep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// Uniform random choice among enabled events.
    Seeded(u64),
    /// Follow the steps, then deliver oldest-first.
    Scripted(Vec<ScriptStep>),
    /// Enumerate every interleaving up to the depth bound.
    Exhaustive { depth: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMode {
    /// Referee that exposes every legal decision to the adversary.
    Oracle,
    /// Real protocol run in synchronous rounds once every live node joined.
    Concrete,
}

/// What a named scenario is expected to produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expectation {
    AllDecide(ValuePayload),
    MixedPathsDecide(ValuePayload),
    ViolationExpected(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub cfg: OptimizerConfig,
    pub initial_values: Vec<FullValue>,
    pub faults: Vec<Fault>,
    pub schedule: Schedule,
    pub validity: ValidityTable,
    pub base: BaseMode,
    pub expect: Option<Expectation>,
}

impl Scenario {
    /// All-correct scenario with the given initial payloads.
    pub fn new(name: impl Into<String>, cfg: OptimizerConfig, values: &[ValuePayload]) -> Self {
        Scenario {
            name: name.into(),
            initial_values: values.iter().cloned().map(FullValue::bare).collect(),
            faults: vec![Fault::Correct; values.len()],
            cfg,
            schedule: Schedule::Seeded(0),
            validity: ValidityTable::new(),
            base: BaseMode::Oracle,
            expect: None,
        }
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn is_correct(&self, node: NodeId) -> bool {
        self.faults[node.index()].is_correct()
    }

    pub fn correct_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n()).map(NodeId).filter(|i| self.is_correct(*i))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::ScenarioInvalid(msg));
        validate_config(self.cfg.clone()).map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
        let n = self.n();
        if self.initial_values.len() != n || self.faults.len() != n {
            return invalid(format!(
                "expected {n} nodes, got {} initial values and {} fault entries",
                self.initial_values.len(),
                self.faults.len()
            ));
        }
        let faulty = self.faults.iter().filter(|f| !f.is_correct()).count();
        if faulty > self.cfg.f && !self.cfg.straw_man {
            return invalid(format!("{faulty} faulty nodes exceed f={}", self.cfg.f));
        }
        if self.faults.iter().any(Fault::is_byzantine) && !self.cfg.model.is_byzantine() {
            return invalid("byzantine faults require a byzantine failure model".into());
        }
        for fault in &self.faults {
            if let Fault::Byzantine(ByzantineStrategy::Equivocate { targets, .. }) = fault {
                if targets.iter().any(|t| t.index() >= n) {
                    return invalid("equivocation target out of range".into());
                }
            }
            if let Fault::Byzantine(ByzantineStrategy::ArbitraryScript(sends)) = fault {
                if sends.iter().any(|s| s.to.index() >= n || s.from.index() >= n) {
                    return invalid("scripted send out of range".into());
                }
            }
        }
        if self.cfg.is_sync_variant() && self.cfg.variant == crate::types::Variant::ProofAware {
            return invalid("the timeout mode applies to the proof-oblivious optimizer only".into());
        }
        Ok(())
    }

    /// True when every correct node's initial value is valid.
    pub fn correct_inputs_valid(&self) -> bool {
        self.correct_nodes()
            .all(|i| self.validity.check(&self.initial_values[i.index()].val))
    }

    pub fn model(&self) -> FailureModel {
        self.cfg.model
    }
}
