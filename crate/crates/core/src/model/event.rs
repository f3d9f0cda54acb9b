use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AgentId, Message, Value};

/// An environment action with a categorical label.
///
/// Labels are the vocabulary that theory-of-mind predictions are scored
/// against, so they should be stable identifiers rather than prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
}

impl Action {
    pub fn new(label: impl Into<String>) -> Self {
        Action {
            label: label.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilestoneKind {
    /// Must be reached for the run to succeed.
    Required,
    /// Reaching it fails the run immediately.
    Failure,
    /// Recorded only.
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Failure,
    HorizonExceeded,
}

impl RunStatus {
    pub fn is_success(self) -> bool {
        self == RunStatus::Success
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Failure => "failure",
            RunStatus::HorizonExceeded => "horizon_exceeded",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    MessageSent {
        message: Message,
    },
    MessageDropped {
        message: Message,
        reason: String,
    },
    ActionTaken {
        agent: AgentId,
        action: Action,
        #[serde(default)]
        taint: BTreeSet<String>,
    },
    EnvChanged {
        key: String,
        value: Value,
        #[serde(default)]
        taint: BTreeSet<String>,
    },
    MilestoneReached {
        name: String,
        kind: MilestoneKind,
    },
    InjectionFired {
        label: String,
        detail: String,
    },
    /// Memory snapshot, reflection, or error note for one agent.
    AgentInternal {
        agent: AgentId,
        memory: Vec<MemoryEntry>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    PredictionMade {
        agent: AgentId,
        target: AgentId,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distribution: Option<BTreeMap<String, f64>>,
    },
    /// An agent first picked up a taint label. `source` is the agent whose
    /// message or env write carried it; `None` marks the origin.
    Contaminated {
        agent: AgentId,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<AgentId>,
        via: String,
    },
    RunEnded {
        status: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success_step: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl Event {
    pub fn message(&self) -> Option<&Message> {
        match &self.payload {
            EventPayload::MessageSent { message } => Some(message),
            _ => None,
        }
    }
}
