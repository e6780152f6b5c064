use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FailureModel, FullValue, NodeId, ValidityPredicate, ValuePayload};

/// Which validity guarantee the base protocol provides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityFlavor {
    /// Decision was proposed by some participant.
    Benign,
    /// Unanimous correct proposals force the decision; otherwise any value a
    /// correct participant proposed.
    Classical,
    /// Classical plus: in a binary domain any proposed value, otherwise any
    /// valid proposed value.
    External { binary: bool },
}

impl ValidityFlavor {
    pub fn for_model(model: FailureModel, binary_domain: bool) -> Self {
        match model {
            FailureModel::Benign => ValidityFlavor::Benign,
            FailureModel::ByzantineClassical => ValidityFlavor::Classical,
            FailureModel::ByzantineExternal => ValidityFlavor::External { binary: binary_domain },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaseError {
    #[error("node {0} proposed twice to the same base instance")]
    DuplicatePropose(NodeId),
    #[error("no legal decision value among the proposals")]
    NoLegalValue,
    #[error("base instance has no proposals yet")]
    NotReady,
    #[error("base instance already decided")]
    AlreadyDecided,
    #[error("adversary choice {choice} out of range ({legal} legal values)")]
    BadChoice { choice: usize, legal: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Proposal {
    pub value: FullValue,
    pub correct: bool,
}

/// Referee implementation of a single base-consensus instance. The adversary
/// picks among every decision the contract allows.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct OracleInstance {
    proposals: BTreeMap<NodeId, Proposal>,
    decision: Option<ValuePayload>,
}

impl OracleInstance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a proposal; `correct` marks participants that are never faulty.
    pub fn base_propose(&mut self, node: NodeId, value: FullValue, correct: bool) -> Result<(), BaseError> {
        if self.proposals.contains_key(&node) {
            return Err(BaseError::DuplicatePropose(node));
        }
        self.proposals.insert(node, Proposal { value, correct });
        Ok(())
    }

    pub fn proposals(&self) -> &BTreeMap<NodeId, Proposal> {
        &self.proposals
    }

    pub fn has_proposed(&self, node: NodeId) -> bool {
        self.proposals.contains_key(&node)
    }

    pub fn decision(&self) -> Option<&ValuePayload> {
        self.decision.as_ref()
    }

    /// Every value the contract permits, sorted.
    pub fn legal_decisions(&self, flavor: ValidityFlavor, valid: &dyn ValidityPredicate) -> Result<Vec<ValuePayload>, BaseError> {
        if self.proposals.is_empty() {
            return Err(BaseError::NotReady);
        }
        let all: BTreeSet<&ValuePayload> = self.proposals.values().map(|p| &p.value.val).collect();
        let correct: BTreeSet<&ValuePayload> = self.proposals.values().filter(|p| p.correct).map(|p| &p.value.val).collect();
        let legal: BTreeSet<&ValuePayload> = match flavor {
            ValidityFlavor::Benign => all,
            _ if correct.len() == 1 => correct,
            ValidityFlavor::Classical if correct.is_empty() => all,
            ValidityFlavor::Classical => correct,
            ValidityFlavor::External { binary: true } => all,
            ValidityFlavor::External { binary: false } => self
                .proposals
                .values()
                .filter(|p| valid.is_valid(&p.value))
                .map(|p| &p.value.val)
                .collect(),
        };
        if legal.is_empty() {
            return Err(BaseError::NoLegalValue);
        }
        Ok(legal.into_iter().cloned().collect())
    }

    /// Decides the `choice`-th legal value.
    pub fn oracle_decide(
        &mut self,
        flavor: ValidityFlavor,
        valid: &dyn ValidityPredicate,
        choice: usize,
    ) -> Result<ValuePayload, BaseError> {
        if self.decision.is_some() {
            return Err(BaseError::AlreadyDecided);
        }
        let legal = self.legal_decisions(flavor, valid)?;
        let v = legal
            .get(choice)
            .cloned()
            .ok_or(BaseError::BadChoice { choice, legal: legal.len() })?;
        self.decision = Some(v.clone());
        Ok(v)
    }

    /// Sets the decision without a legality check. Used to keep simulating
    /// after a concrete protocol broke its contract.
    pub fn force_decision(&mut self, v: ValuePayload) -> Result<(), BaseError> {
        if self.decision.is_some() {
            return Err(BaseError::AlreadyDecided);
        }
        self.decision = Some(v);
        Ok(())
    }

    /// Records an externally computed decision (concrete protocols) after
    /// checking it against the contract.
    pub fn record_decision(&mut self, flavor: ValidityFlavor, valid: &dyn ValidityPredicate, v: ValuePayload) -> Result<(), BaseError> {
        if self.decision.is_some() {
            return Err(BaseError::AlreadyDecided);
        }
        if !self.legal_decisions(flavor, valid)?.contains(&v) {
            return Err(BaseError::NoLegalValue);
        }
        self.decision = Some(v);
        Ok(())
    }
}
