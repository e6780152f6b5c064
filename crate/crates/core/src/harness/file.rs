use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::simnet::{BaseMode, ByzantineStrategy, Expectation, Fault, MessageKind, Scenario, Schedule, ScriptedSend};
use crate::types::{
    bytes_from_text, bytes_to_text, CriteriaSelection, FailureModel, FullValue, NodeId, OptimizerConfig, ValidityTable,
    ValuePayload, Variant,
};

/// On-disk scenario document. Keys are declared in sorted order, so
/// serializing a parsed canonical file reproduces it byte for byte.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<ExpectSection>,
    pub nodes: Vec<NodeEntry>,
    pub schedule: ScheduleSection,
    pub system: SystemSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validity: Vec<ValidityEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "default_base")]
    pub base: BaseMode,
    #[serde(default)]
    pub binary_domain: bool,
    /// `min-count:K`; absent means the model's own rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<String>,
    pub f: usize,
    pub model: FailureModel,
    pub n: usize,
    pub preferred: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_proof: Option<String>,
    #[serde(default)]
    pub straw_man: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync_timeout_ms: Option<u64>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_base() -> BaseMode {
    BaseMode::Oracle
}

fn default_variant() -> Variant {
    Variant::ProofOblivious
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    /// `correct`, `crash@K`, `byzantine:silent`, `byzantine:equivocate X Y [T,..]`,
    /// `byzantine:mimic W` or `byzantine:script`.
    pub fault: String,
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_proof: Option<String>,
    pub initial_val: String,
    /// Sends of a `byzantine:script` node, as `FROM->TO KIND VAL`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sends: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityEntry {
    pub val: String,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// `seeded`, `scripted` or `exhaustive`.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// `all-decide`, `mixed-paths-decide` or `violation`.
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Scenario(msg.into())
}

fn payload(s: &str) -> Result<ValuePayload, HarnessError> {
    ValuePayload::from_text(s).map_err(|e| bad(format!("value {s:?}: {e}")))
}

fn proof(s: &Option<String>) -> Result<Vec<u8>, HarnessError> {
    match s {
        Some(p) => bytes_from_text(p).map_err(|e| bad(format!("proof {p:?}: {e}"))),
        None => Ok(Vec::new()),
    }
}

fn proof_text(p: &[u8]) -> Option<String> {
    (!p.is_empty()).then(|| bytes_to_text(p))
}

fn fault_text(fault: &Fault) -> String {
    match fault {
        Fault::Correct => "correct".into(),
        Fault::CrashAt(k) => format!("crash@{k}"),
        Fault::Byzantine(ByzantineStrategy::Silent) => "byzantine:silent".into(),
        Fault::Byzantine(ByzantineStrategy::Equivocate { x, y, targets }) => {
            let mut s = format!("byzantine:equivocate {x} {y}");
            if !targets.is_empty() {
                let t: Vec<String> = targets.iter().map(|t| t.0.to_string()).collect();
                s.push(' ');
                s.push_str(&t.join(","));
            }
            s
        }
        Fault::Byzantine(ByzantineStrategy::MimicHonest(w)) => format!("byzantine:mimic {w}"),
        Fault::Byzantine(ByzantineStrategy::ArbitraryScript(_)) => "byzantine:script".into(),
    }
}

fn parse_fault(s: &str, sends: &[String]) -> Result<Fault, HarnessError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let fault = match parts.as_slice() {
        ["correct"] => Fault::Correct,
        [c] if c.starts_with("crash@") => {
            Fault::CrashAt(c["crash@".len()..].parse().map_err(|_| bad(format!("bad crash index in {s:?}")))?)
        }
        ["byzantine:silent"] => Fault::Byzantine(ByzantineStrategy::Silent),
        ["byzantine:mimic", w] => Fault::Byzantine(ByzantineStrategy::MimicHonest(payload(w)?)),
        ["byzantine:equivocate", x, y, rest @ ..] if rest.len() <= 1 => {
            let mut targets = BTreeSet::new();
            if let Some(t) = rest.first() {
                for id in t.split(',') {
                    targets.insert(NodeId(id.parse().map_err(|_| bad(format!("bad target {id:?} in {s:?}")))?));
                }
            }
            Fault::Byzantine(ByzantineStrategy::Equivocate { x: payload(x)?, y: payload(y)?, targets })
        }
        ["byzantine:script"] => {
            let sends = sends.iter().map(|x| parse_send(x)).collect::<Result<_, _>>()?;
            Fault::Byzantine(ByzantineStrategy::ArbitraryScript(sends))
        }
        _ => return Err(bad(format!("unknown fault {s:?}"))),
    };
    if !sends.is_empty() && !matches!(fault, Fault::Byzantine(ByzantineStrategy::ArbitraryScript(_))) {
        return Err(bad(format!("sends given for non-script fault {s:?}")));
    }
    Ok(fault)
}

fn send_text(s: &ScriptedSend) -> String {
    format!("{}->{} {} {}", s.from, s.to, s.kind, s.val)
}

fn parse_send(s: &str) -> Result<ScriptedSend, HarnessError> {
    let err = || bad(format!("malformed send {s:?}"));
    let parts: Vec<&str> = s.split_whitespace().collect();
    let [route, kind, val] = parts.as_slice() else { return Err(err()) };
    let (from, to) = route.split_once("->").ok_or_else(err)?;
    Ok(ScriptedSend {
        from: NodeId(from.parse().map_err(|_| err())?),
        to: NodeId(to.parse().map_err(|_| err())?),
        kind: MessageKind::parse(kind).ok_or_else(err)?,
        val: payload(val)?,
    })
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    /// Canonical document for a scenario.
    pub fn from_scenario(scn: &Scenario) -> Self {
        let cfg = &scn.cfg;
        let system = SystemSection {
            base: scn.base,
            binary_domain: cfg.binary_domain,
            criteria: match cfg.criteria {
                CriteriaSelection::PerModel => None,
                CriteriaSelection::MinCount(k) => Some(format!("min-count:{k}")),
            },
            f: cfg.f,
            model: cfg.model,
            n: cfg.n,
            preferred: cfg.preferred.val.to_text(),
            preferred_proof: proof_text(cfg.preferred.proof()),
            straw_man: cfg.straw_man,
            sync_timeout_ms: cfg.sync_timeout_ms,
            variant: cfg.variant,
        };
        let nodes = scn
            .initial_values
            .iter()
            .zip(&scn.faults)
            .enumerate()
            .map(|(id, (value, fault))| NodeEntry {
                fault: fault_text(fault),
                id,
                initial_proof: proof_text(value.proof()),
                initial_val: value.val.to_text(),
                sends: match fault {
                    Fault::Byzantine(ByzantineStrategy::ArbitraryScript(s)) => s.iter().map(send_text).collect(),
                    _ => Vec::new(),
                },
            })
            .collect();
        let schedule = match &scn.schedule {
            Schedule::Seeded(seed) => {
                ScheduleSection { depth: None, mode: "seeded".into(), script: Vec::new(), seed: Some(*seed) }
            }
            Schedule::Scripted(steps) => ScheduleSection {
                depth: None,
                mode: "scripted".into(),
                script: steps.iter().map(|s| s.to_string()).collect(),
                seed: None,
            },
            Schedule::Exhaustive { depth } => {
                ScheduleSection { depth: Some(*depth), mode: "exhaustive".into(), script: Vec::new(), seed: None }
            }
        };
        let expect = scn.expect.as_ref().map(|e| match e {
            Expectation::AllDecide(x) => {
                ExpectSection { kind: None, outcome: "all-decide".into(), value: Some(x.to_text()) }
            }
            Expectation::MixedPathsDecide(x) => {
                ExpectSection { kind: None, outcome: "mixed-paths-decide".into(), value: Some(x.to_text()) }
            }
            Expectation::ViolationExpected(k) => {
                ExpectSection { kind: Some(k.clone()), outcome: "violation".into(), value: None }
            }
        });
        ScenarioFile {
            name: scn.name.clone(),
            expect,
            nodes,
            schedule,
            system,
            validity: scn
                .validity
                .entries()
                .map(|(val, valid)| ValidityEntry { val: val.to_text(), valid })
                .collect(),
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario, HarnessError> {
        let sys = &self.system;
        let mut cfg = OptimizerConfig::new(
            sys.n,
            sys.f,
            FullValue::new(payload(&sys.preferred)?, proof(&sys.preferred_proof)?),
            sys.model,
        );
        cfg.variant = sys.variant;
        cfg.binary_domain = sys.binary_domain;
        cfg.straw_man = sys.straw_man;
        cfg.sync_timeout_ms = sys.sync_timeout_ms;
        cfg.criteria = match sys.criteria.as_deref() {
            None | Some("per-model") => CriteriaSelection::PerModel,
            Some(c) => match c.strip_prefix("min-count:").map(str::parse) {
                Some(Ok(k)) => CriteriaSelection::MinCount(k),
                _ => return Err(bad(format!("unknown criteria {c:?}"))),
            },
        };
        if self.nodes.len() != sys.n {
            return Err(bad(format!("system.n = {} but {} nodes listed", sys.n, self.nodes.len())));
        }
        let mut initial_values = Vec::with_capacity(sys.n);
        let mut faults = Vec::with_capacity(sys.n);
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(bad(format!("node entry {i} has id {}; ids must be 0..n in order", node.id)));
            }
            initial_values.push(FullValue::new(payload(&node.initial_val)?, proof(&node.initial_proof)?));
            faults.push(parse_fault(&node.fault, &node.sends)?);
        }
        let mut validity = ValidityTable::new();
        for e in &self.validity {
            validity.set(payload(&e.val)?, e.valid);
        }
        let sch = &self.schedule;
        let schedule = match sch.mode.as_str() {
            "seeded" => Schedule::Seeded(sch.seed.unwrap_or(0)),
            "scripted" => Schedule::Scripted(
                sch.script.iter().map(|s| s.parse().map_err(|e: String| bad(e))).collect::<Result<_, _>>()?,
            ),
            "exhaustive" => Schedule::Exhaustive { depth: sch.depth.unwrap_or(1_000) },
            m => return Err(bad(format!("unknown schedule mode {m:?}"))),
        };
        let expect = match &self.expect {
            None => None,
            Some(e) => {
                let value = || e.value.as_deref().ok_or_else(|| bad("expectation needs a value")).and_then(payload);
                Some(match e.outcome.as_str() {
                    "all-decide" => Expectation::AllDecide(value()?),
                    "mixed-paths-decide" => Expectation::MixedPathsDecide(value()?),
                    "violation" => Expectation::ViolationExpected(
                        e.kind.clone().ok_or_else(|| bad("violation expectation needs a kind"))?,
                    ),
                    o => return Err(bad(format!("unknown expected outcome {o:?}"))),
                })
            }
        };
        let scn = Scenario {
            name: self.name.clone(),
            cfg,
            initial_values,
            faults,
            schedule,
            validity,
            base: sys.base,
            expect,
        };
        scn.validate()?;
        Ok(scn)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ScenarioFile::parse(&text)
        .and_then(|f| f.to_scenario())
        .map_err(|e| HarnessError::InFile { path: path.to_path_buf(), source: Box::new(e) })
}

pub fn save_scenario(path: &Path, scn: &Scenario) -> Result<(), HarnessError> {
    std::fs::write(path, ScenarioFile::from_scenario(scn).to_toml()).map_err(|e| HarnessError::io(path, e))
}
