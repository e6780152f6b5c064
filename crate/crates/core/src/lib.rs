//! One-round fast path for consensus biased toward a preferred value, with
//! a deterministic adversarial simulator to check it.

pub mod adoption;
pub mod base;
pub mod harness;
pub mod optimizer;
pub mod par;
pub mod proof_aware;
pub mod scenarios;
pub mod simnet;
pub mod types;

pub use optimizer::{DecisionPath, DecisionRecord, NodeAction, OptimizerNode};
pub use proof_aware::ProofAwareNode;
pub use types::{FailureModel, FullValue, NodeId, OptimizerConfig, ValidityTable, ValuePayload, Variant};
