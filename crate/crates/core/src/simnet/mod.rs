//! Deterministic adversarial network simulator.
//!
//! A [`Scenario`] fixes the configuration, inputs, faults and schedule.
//! [`run`] drives every node to quiescence and produces a [`Trace`];
//! [`explore`] enumerates every schedule and every legal base decision.

mod byzantine;
mod envelope;
mod explore;
pub mod invariants;
mod node;
mod scenario;
mod sim;
mod trace;

use thiserror::Error;

pub use byzantine::{byzantine_emit, EmitContext};
pub use envelope::{BaseMessage, Envelope, MessageKind, Outgoing, WireMessage};
pub use explore::{explore, explore_leaf_keys, explore_many, ExplorationReport, ExploreError, ExploreOptions, Witness};
pub use invariants::{NodeReport, Violation};
pub use node::{Honest, Machine, Stage};
pub use scenario::{BaseMode, ByzantineStrategy, Expectation, Fault, Scenario, Schedule, ScriptStep, ScriptedSend};
pub use sim::{event_budget_from_env, run, run_with, Choice, RunOptions, RunOutcome, Simulator, DEFAULT_EVENT_BUDGET};
pub use trace::{ActionRecord, Counters, EventRecord, KindCounter, Meta, Trace, TraceLine};

use crate::base::BaseError;
use crate::types::NodeId;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("event budget of {budget} exhausted before quiescence")]
    NonQuiescence { budget: u64 },
    #[error("node {node} tried to send as node {claimed}")]
    ImpersonationAttempt { node: NodeId, claimed: NodeId },
    #[error("script step {index} ({step}) matches no enabled event")]
    ScriptMismatch { index: usize, step: String },
    #[error("base consensus: {0}")]
    Base(#[from] BaseError),
}
