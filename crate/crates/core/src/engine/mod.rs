//! Deterministic simulation loop, Monte-Carlo ensembles, replay and probes.
//!
//! Messages emitted at step `t` are delivered at `t + 1`. Within a step,
//! agents act in the protocol's turn order and each agent's events are
//! committed before the next agent acts.

mod ensemble;
mod environment;
mod replay;
mod sim;
mod stream;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::agents::{AgentError, LlmTransport};
use crate::model::{AgentId, ModelError, RunStatus, State, Trace, Violation};

pub use ensemble::{run_ensemble, run_ensemble_map, seeds_from, wilson_interval, EnsembleResult, WILSON_Z95};
pub use environment::{
    DeclarativeEnvironment, DeclarativeParams, Effect, EnvFactory, EnvRule, Environment, EnvironmentRegistry, Shock,
};
pub use replay::{probe_agent, replay};
pub use sim::{run_once, Simulation};
pub use stream::{derive_seed, stream};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("scenario is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("environment parameters: {0}")]
    EnvParams(String),
    #[error("trace was recorded for scenario {found}, not {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("replay diverged at event {index}")]
    Divergence { index: usize },
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("probe step {step} is beyond the run end at step {end}")]
    StepBeyondEnd { step: u32, end: u32 },
    #[error("building behaviour for `{agent}`: {source}")]
    Behavior {
        agent: AgentId,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Knobs that are not part of the scenario itself.
#[derive(Clone, Default)]
pub struct EngineOptions {
    /// Transport for `llm_adapter` behaviours.
    pub llm_transport: Option<Arc<dyn LlmTransport>>,
    pub environments: EnvironmentRegistry,
    /// Worker threads for ensembles; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl fmt::Debug for EngineOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EngineOptions")
            .field("llm_transport", &self.llm_transport.is_some())
            .field("environments", &self.environments)
            .field("jobs", &self.jobs)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Trace,
    pub milestones_hit: BTreeMap<String, u32>,
    pub status: RunStatus,
    pub reason: Option<String>,
    /// Step at which every required milestone had been reached.
    pub success_step: Option<u32>,
    /// Per agent, the first step each taint label reached it.
    pub taint_report: BTreeMap<AgentId, BTreeMap<String, u32>>,
    pub final_state: State,
    pub steps_executed: u32,
}

impl RunResult {
    pub fn seed(&self) -> u64 {
        self.trace.seed()
    }

    pub fn is_failure(&self) -> bool {
        self.status != RunStatus::Success
    }

    /// Rebuilds run-level results from a recorded trace, for traces that were
    /// ingested rather than executed here. `initial` is the environment's
    /// starting state; env changes in the trace are folded onto it.
    pub fn from_trace(trace: Trace, initial: State) -> Result<Self, ModelError> {
        use crate::model::EventPayload as P;
        let mut milestones_hit = BTreeMap::new();
        let mut taint_report: BTreeMap<AgentId, BTreeMap<String, u32>> = BTreeMap::new();
        let mut final_state = initial;
        let mut end = None;
        for e in &trace.events {
            match &e.payload {
                P::MilestoneReached { name, .. } => {
                    milestones_hit.entry(name.clone()).or_insert(e.step);
                }
                P::Contaminated { agent, label, .. } => {
                    taint_report.entry(agent.clone()).or_default().entry(label.clone()).or_insert(e.step);
                }
                P::EnvChanged { key, value, .. } if value.is_null() => {
                    final_state.remove(key);
                }
                P::EnvChanged { key, value, .. } => {
                    final_state.insert(key.clone(), value.clone());
                }
                P::RunEnded { status, reason, success_step } => end = Some((e.step, *status, reason.clone(), *success_step)),
                _ => {}
            }
        }
        let (last, status, reason, success_step) = end.ok_or(ModelError::Unterminated)?;
        Ok(RunResult {
            trace,
            milestones_hit,
            status,
            reason,
            success_step,
            taint_report,
            final_state,
            steps_executed: last + 1,
        })
    }
}
