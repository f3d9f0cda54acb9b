//! Agent behaviour contract and the built-in behaviours.
//!
//! A behaviour maps (memory, observation, seeded random stream) to a
//! decision. Built-ins never touch a clock or OS randomness, so a decision is
//! fully determined by its inputs and the stream state.

mod capability;
mod llm;
mod memory;
mod scripted;
mod stance;
mod table;
mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{Action, AgentId, Message, MessageKind, Value};

pub use capability::{capability_lookup, CapabilityTable};
pub use llm::{
    AdapterRequest, CommandTransport, DecisionParser, LineProtocolParser, LlmAdapterBehavior, LlmAdapterSpec,
    LlmTransport, Role, RoleMessage, TransportError,
};
pub use memory::{truncate_context, AgentMemory};
pub use scripted::{MessageMatch, ProbeRule, RuleTrigger, ScriptOutput, ScriptRule, ScriptedBehavior, ScriptedSpec};
pub use stance::{ContrarianBehavior, ContrarianSpec, SycophantBehavior, SycophantSpec};
pub use table::{ScheduledTask, TableBehavior, TableSpec};
pub use template::{render, Bindings};

/// Random stream handed to behaviours; seeded by the engine.
pub type AgentRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("malformed behaviour parameters: {0}")]
    Params(String),
    #[error("no capability entry for task `{0}` and no default")]
    MissingCapability(String),
    #[error("adapter transport failed: {0}")]
    Transport(#[from] TransportError),
    #[error("could not parse adapter response: {0}")]
    Parse(String),
    #[error("llm adapter behaviour needs a transport")]
    NoTransport,
    #[error("behaviour produced more than one action at step {0}")]
    MultipleActions(u32),
}

/// What one agent sees at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step: u32,
    pub agent: AgentId,
    pub inbox: Vec<Message>,
    /// Partial view of the environment granted to this agent.
    pub env_view: BTreeMap<String, Value>,
    pub objective: String,
    /// Allowed recipients under the current topology.
    pub peers: BTreeSet<AgentId>,
    /// Every other agent in the scenario (valid prediction targets).
    pub others: BTreeSet<AgentId>,
    /// Capability tags knocked out by an active injection.
    pub disabled_capabilities: BTreeSet<String>,
}

impl Observation {
    pub fn new(step: u32, agent: impl Into<AgentId>) -> Self {
        Observation {
            step,
            agent: agent.into(),
            inbox: Vec::new(),
            env_view: BTreeMap::new(),
            objective: String::new(),
            peers: BTreeSet::new(),
            others: BTreeSet::new(),
            disabled_capabilities: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipients {
    /// Everyone the topology lets this agent reach.
    AllPeers,
    Agents(BTreeSet<AgentId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutgoingMessage {
    pub to: Recipients,
    pub content: String,
    pub kind: MessageKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub target: AgentId,
    pub label: String,
    pub distribution: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentDecision {
    pub messages: Vec<OutgoingMessage>,
    pub action: Option<Action>,
    pub predictions: Vec<Prediction>,
    pub memory_append: Option<String>,
    /// Declared seed-error labels this decision originates (capability troughs).
    pub seed_taint: BTreeSet<String>,
}

impl AgentDecision {
    pub(crate) fn set_action(&mut self, action: Action, step: u32) -> Result<(), AgentError> {
        if self.action.is_some() {
            return Err(AgentError::MultipleActions(step));
        }
        self.action = Some(action);
        Ok(())
    }

    pub(crate) fn remember(&mut self, text: String) {
        match &mut self.memory_append {
            Some(existing) => {
                existing.push_str("; ");
                existing.push_str(&text);
            }
            None => self.memory_append = Some(text),
        }
    }
}

/// Pluggable decision contract.
pub trait AgentBehavior: Send + Sync {
    fn decide(&self, memory: &AgentMemory, obs: &Observation, rng: &mut AgentRng) -> Result<AgentDecision, AgentError>;

    /// Out-of-band answer to a probe question. Defaults to the memory digest.
    fn answer_probe(&self, memory: &AgentMemory, _obs: &Observation, _question: &str) -> Result<String, AgentError> {
        Ok(memory.digest())
    }

    /// Private reflection between rounds, appended to memory when `Some`.
    fn reflect(&self, _memory: &AgentMemory, _step: u32) -> Option<String> {
        None
    }

    /// Ground-truth internal state, for deception consistency checks.
    fn ground_truth(&self) -> Option<&BTreeMap<String, String>> {
        None
    }
}

/// Declarative behaviour description as it appears in scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorSpec {
    Scripted(ScriptedSpec),
    TableStochastic(TableSpec),
    Sycophant(SycophantSpec),
    Contrarian(ContrarianSpec),
    LlmAdapter(LlmAdapterSpec),
}

impl BehaviorSpec {
    /// Replies to every incoming message with its own content.
    pub fn echo() -> Self {
        BehaviorSpec::Scripted(ScriptedSpec::echo())
    }

    pub fn sycophant(initial_answer: impl Into<String>, switch_probability: f64) -> Self {
        BehaviorSpec::Sycophant(SycophantSpec::new(initial_answer, switch_probability))
    }

    /// Parameter problems; empty when complete and in range.
    pub fn problems(&self) -> Vec<String> {
        match self {
            BehaviorSpec::Scripted(s) => s.problems(),
            BehaviorSpec::TableStochastic(t) => t.problems(),
            BehaviorSpec::Sycophant(s) => s.problems(),
            BehaviorSpec::Contrarian(_) => Vec::new(),
            BehaviorSpec::LlmAdapter(_) => Vec::new(),
        }
    }

    /// Taint labels this behaviour may originate on capability failure.
    pub fn failure_taints(&self) -> BTreeSet<String> {
        match self {
            BehaviorSpec::Scripted(s) => s.rules.iter().filter_map(|r| r.failure_taint.clone()).collect(),
            BehaviorSpec::TableStochastic(t) => t.failure_taint.iter().cloned().collect(),
            _ => BTreeSet::new(),
        }
    }

    /// Capability tags the behaviour draws on.
    pub fn capability_tags(&self) -> BTreeSet<String> {
        match self {
            BehaviorSpec::Scripted(s) => s.rules.iter().filter_map(|r| r.capability.clone()).collect(),
            BehaviorSpec::TableStochastic(t) => t
                .capabilities
                .tags
                .keys()
                .cloned()
                .chain(t.tasks.iter().map(|task| task.tag.clone()))
                .collect(),
            _ => BTreeSet::new(),
        }
    }

    pub fn capability_table(&self) -> Option<&CapabilityTable> {
        match self {
            BehaviorSpec::Scripted(s) => Some(&s.capabilities),
            BehaviorSpec::TableStochastic(t) => Some(&t.capabilities),
            _ => None,
        }
    }

    pub fn is_deterministic_kind(&self) -> bool {
        !matches!(self, BehaviorSpec::LlmAdapter(_))
    }

    /// Instantiates the behaviour. `transport` is only consulted by the LLM
    /// adapter kind.
    pub fn build(&self, transport: Option<Arc<dyn LlmTransport>>) -> Result<Box<dyn AgentBehavior>, AgentError> {
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(AgentError::Params(problems.join("; ")));
        }
        Ok(match self {
            BehaviorSpec::Scripted(s) => Box::new(ScriptedBehavior::new(s.clone())?),
            BehaviorSpec::TableStochastic(t) => Box::new(TableBehavior::new(t.clone())),
            BehaviorSpec::Sycophant(s) => Box::new(SycophantBehavior::new(s.clone())),
            BehaviorSpec::Contrarian(c) => Box::new(ContrarianBehavior::new(c.clone())),
            BehaviorSpec::LlmAdapter(a) => {
                let transport = match transport {
                    Some(t) => t,
                    None => Arc::new(CommandTransport::from_argv(&a.command).ok_or(AgentError::NoTransport)?),
                };
                Box::new(LlmAdapterBehavior::new(a.clone(), transport, Box::new(LineProtocolParser)))
            }
        })
    }
}

/// Builds `behavior` and evaluates one decision.
pub fn decide(
    behavior: &BehaviorSpec,
    memory: &AgentMemory,
    obs: &Observation,
    rng: &mut AgentRng,
) -> Result<AgentDecision, AgentError> {
    behavior.build(None)?.decide(memory, obs, rng)
}

/// Resolves `$sender`, `$all`, or a literal agent name.
pub(crate) fn resolve_targets(targets: &[String], sender: Option<&AgentId>) -> Recipients {
    if targets.is_empty() || targets.iter().any(|t| t == "$all") {
        return Recipients::AllPeers;
    }
    Recipients::Agents(
        targets
            .iter()
            .filter_map(|t| {
                if t == "$sender" {
                    sender.cloned()
                } else {
                    Some(AgentId::from(t.as_str()))
                }
            })
            .collect(),
    )
}
