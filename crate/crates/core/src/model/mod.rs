//! Domain types shared by every other module: identifiers, topology and
//! protocol descriptions, scenario specs, and the canonical trace/event model.

mod canonical;
mod event;
mod ids;
mod message;
mod protocol;
mod scenario;
mod topology;
mod trace;
mod validate;

pub use canonical::{canonical_json, sha256_hex};
pub use event::{Action, Event, EventPayload, MemoryEntry, MilestoneKind, RunStatus};
pub use ids::AgentId;
pub use message::{Message, MessageKind};
pub use protocol::{Aggregation, CommModel, ProtocolConfig, TurnOrdering};
pub use scenario::{
    default_failure_map, AgentDecl, CmpOp, EnvironmentSpec, Exposure, FailureMode, MetricsConfig,
    MilestoneSpec, Outcome, Predicate, SalientFailure, ScenarioSpec,
};
pub use topology::{TopologyKind, TopologySpec};
pub use trace::{Trace, TraceDigest, TraceHeader, TRACE_SCHEMA};
pub use validate::{validate, Severity, Violation, ViolationCode};

/// Environment and parameter values. Maps serialise with sorted keys.
pub type Value = serde_json::Value;

/// Environment state: key to value.
pub type State = std::collections::BTreeMap<String, Value>;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("trace has no RunEnded event")]
    Unterminated,
    #[error("trace schema `{found}` is not supported (expected `{expected}`)")]
    Schema { found: String, expected: String },
    #[error("malformed trace line {line}: {source}")]
    TraceLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("empty trace file")]
    EmptyTrace,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
