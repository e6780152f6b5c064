//! Domain types shared by every layer: node identities, values, failure
//! models, optimizer configuration and the external validity predicate.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

/// Opaque byte string shared cheaply between clones.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Bytes(Arc<[u8]>);

impl Bytes {
    fn new(b: &[u8]) -> Self {
        Bytes(Arc::from(b))
    }
}

/// The decidable part of a proposal. Equality is byte equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValuePayload(Bytes);

impl ValuePayload {
    /// Fails on an empty byte string.
    pub fn new(bytes: impl AsRef<[u8]>) -> Result<Self, ConfigError> {
        let b = bytes.as_ref();
        if b.is_empty() {
            return Err(ConfigError::EmptyValue);
        }
        Ok(ValuePayload(Bytes::new(b)))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0 .0
    }

    pub fn len(&self) -> usize {
        self.as_bytes().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Printable-ASCII text without whitespace is rendered verbatim, anything
    /// else as `hex:` followed by lowercase hex digits.
    pub fn to_text(&self) -> String {
        bytes_to_text(self.as_bytes())
    }

    pub fn from_text(s: &str) -> Result<Self, ConfigError> {
        ValuePayload::new(bytes_from_text(s)?)
    }
}

impl fmt::Debug for ValuePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

impl fmt::Display for ValuePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Serialize for ValuePayload {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for ValuePayload {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ValuePayload::from_text(&s).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn bytes_to_text(b: &[u8]) -> String {
    let plain = !b.is_empty()
        && !b.starts_with(b"hex:")
        && b.iter().all(|c| c.is_ascii_graphic());
    if plain {
        String::from_utf8_lossy(b).into_owned()
    } else if b.is_empty() {
        String::new()
    } else {
        let mut s = String::with_capacity(4 + 2 * b.len());
        s.push_str("hex:");
        for c in b {
            s.push_str(&format!("{c:02x}"));
        }
        s
    }
}

pub(crate) fn bytes_from_text(s: &str) -> Result<Vec<u8>, ConfigError> {
    match s.strip_prefix("hex:") {
        Some(hex) => {
            if hex.len() % 2 != 0 {
                return Err(ConfigError::BadEncoding(s.to_string()));
            }
            (0..hex.len())
                .step_by(2)
                .map(|i| {
                    u8::from_str_radix(&hex[i..i + 2], 16)
                        .map_err(|_| ConfigError::BadEncoding(s.to_string()))
                })
                .collect()
        }
        None => Ok(s.as_bytes().to_vec()),
    }
}

/// A proposal: value payload plus an optional validity proof.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FullValue {
    pub val: ValuePayload,
    proof: Bytes,
}

impl FullValue {
    pub fn new(val: ValuePayload, proof: impl AsRef<[u8]>) -> Self {
        FullValue {
            val,
            proof: Bytes::new(proof.as_ref()),
        }
    }

    pub fn bare(val: ValuePayload) -> Self {
        FullValue::new(val, [])
    }

    pub fn proof(&self) -> &[u8] {
        &self.proof.0
    }

    /// Same value with the proof stripped.
    pub fn without_proof(&self) -> Self {
        FullValue::bare(self.val.clone())
    }
}

impl fmt::Debug for FullValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{:?}, proof: {}B}}", self.val, self.proof().len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureModel {
    Benign,
    ByzantineClassical,
    ByzantineExternal,
}

impl FailureModel {
    /// Largest `k` such that `k * f < n` is the required bound.
    fn divisor(self) -> usize {
        match self {
            FailureModel::Benign => 2,
            FailureModel::ByzantineClassical => 4,
            FailureModel::ByzantineExternal => 3,
        }
    }

    pub fn tolerates(self, n: usize, f: usize) -> bool {
        self.divisor() * f < n
    }

    pub fn is_byzantine(self) -> bool {
        !matches!(self, FailureModel::Benign)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ProofOblivious,
    ProofAware,
}

/// Which adoption predicate a node applies when it cannot fast-decide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriteriaSelection {
    /// The predicate that matches the configured failure model.
    PerModel,
    /// Adopt the preferred value when at least this many votes carry it.
    MinCount(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimizerConfig {
    pub n: usize,
    pub f: usize,
    pub preferred: FullValue,
    pub model: FailureModel,
    pub variant: Variant,
    pub criteria: CriteriaSelection,
    /// Enables the timeout evaluation mode; the simulator fires the timer.
    pub sync_timeout_ms: Option<u64>,
    pub binary_domain: bool,
    /// Deliberately misbounded configuration, only used for lower-bound runs.
    pub straw_man: bool,
}

impl OptimizerConfig {
    pub fn new(n: usize, f: usize, preferred: FullValue, model: FailureModel) -> Self {
        OptimizerConfig {
            n,
            f,
            preferred,
            model,
            variant: Variant::ProofOblivious,
            criteria: CriteriaSelection::PerModel,
            sync_timeout_ms: None,
            binary_domain: false,
            straw_man: false,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Number of first-round votes a node waits for.
    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    pub fn is_sync_variant(&self) -> bool {
        self.sync_timeout_ms.is_some()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("resiliency violation: f={f} is too large for n={n} under {model:?}")]
    ResiliencyViolation {
        n: usize,
        f: usize,
        model: FailureModel,
    },
    #[error("the proof-aware variant requires the byzantine-external model")]
    InvalidVariant,
    #[error("degenerate system: n={0} (need at least 2 nodes)")]
    DegenerateSystem(usize),
    #[error("value payloads must be non-empty")]
    EmptyValue,
    #[error("malformed byte encoding: {0:?}")]
    BadEncoding(String),
    #[error("adoption threshold must be at least 1")]
    ZeroThreshold,
}

/// Checks the structural invariants of a configuration and returns it unchanged.
///
/// The straw-man flag bypasses the resiliency check, and the timeout variant
/// relaxes the classical bound to `3f < n`.
pub fn validate_config(cfg: OptimizerConfig) -> Result<OptimizerConfig, ConfigError> {
    if cfg.n < 2 {
        return Err(ConfigError::DegenerateSystem(cfg.n));
    }
    if cfg.variant == Variant::ProofAware && cfg.model != FailureModel::ByzantineExternal {
        return Err(ConfigError::InvalidVariant);
    }
    if cfg.criteria == CriteriaSelection::MinCount(0) {
        return Err(ConfigError::ZeroThreshold);
    }
    let bounded = if cfg.model == FailureModel::ByzantineClassical && cfg.is_sync_variant() {
        3 * cfg.f < cfg.n
    } else {
        cfg.model.tolerates(cfg.n, cfg.f)
    };
    if !bounded && !cfg.straw_man {
        return Err(ConfigError::ResiliencyViolation {
            n: cfg.n,
            f: cfg.f,
            model: cfg.model,
        });
    }
    // Even a straw-man run needs a satisfiable quorum.
    if cfg.f >= cfg.n {
        return Err(ConfigError::ResiliencyViolation {
            n: cfg.n,
            f: cfg.f,
            model: cfg.model,
        });
    }
    Ok(cfg)
}

/// Deterministic boolean predicate over full values.
pub trait ValidityPredicate: Send + Sync {
    fn is_valid(&self, value: &FullValue) -> bool;
}

impl<F> ValidityPredicate for F
where
    F: Fn(&FullValue) -> bool + Send + Sync,
{
    fn is_valid(&self, value: &FullValue) -> bool {
        self(value)
    }
}

/// Table-driven predicate keyed on the value payload. Unlisted values are valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityTable {
    entries: BTreeMap<ValuePayload, bool>,
}

impl ValidityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, val: ValuePayload, valid: bool) -> &mut Self {
        self.entries.insert(val, valid);
        self
    }

    pub fn with(mut self, val: ValuePayload, valid: bool) -> Self {
        self.set(val, valid);
        self
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ValuePayload, bool)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn check(&self, val: &ValuePayload) -> bool {
        self.entries.get(val).copied().unwrap_or(true)
    }
}

impl ValidityPredicate for ValidityTable {
    fn is_valid(&self, value: &FullValue) -> bool {
        self.check(&value.val)
    }
}

#[cfg(test)]
pub(crate) fn val(s: &str) -> ValuePayload {
    ValuePayload::new(s).unwrap()
}
