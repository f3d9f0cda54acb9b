use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::canonical::{canonical_json, sha256_hex};
use super::{AgentId, ProtocolConfig, State, TopologyKind, TopologySpec, Value};
use crate::agents::BehaviorSpec;
use crate::inject::PerturbationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    CascadingReliability,
    InterAgentCommunication,
    MonocultureCollapse,
    ConformityBias,
    DeficientTheoryOfMind,
    MixedMotiveDynamics,
}

impl FailureMode {
    pub const ALL: [FailureMode; 6] = [
        FailureMode::CascadingReliability,
        FailureMode::InterAgentCommunication,
        FailureMode::MonocultureCollapse,
        FailureMode::ConformityBias,
        FailureMode::DeficientTheoryOfMind,
        FailureMode::MixedMotiveDynamics,
    ];
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureMode::CascadingReliability => "cascading-reliability",
            FailureMode::InterAgentCommunication => "inter-agent-communication",
            FailureMode::MonocultureCollapse => "monoculture-collapse",
            FailureMode::ConformityBias => "conformity-bias",
            FailureMode::DeficientTheoryOfMind => "deficient-theory-of-mind",
            FailureMode::MixedMotiveDynamics => "mixed-motive-dynamics",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    Exposure,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalientFailure {
    pub mode: FailureMode,
    pub exposure: Exposure,
}

/// Advisory exposure of each canonical setting to each failure mode.
pub fn default_failure_map(kind: TopologyKind) -> Vec<SalientFailure> {
    use Exposure::{Exposure as E, High as H};
    use FailureMode::*;
    let row: &[(FailureMode, Exposure)] = match kind {
        TopologyKind::SingleAgent => &[(CascadingReliability, H)],
        TopologyKind::Orchestrator => &[
            (CascadingReliability, H),
            (InterAgentCommunication, H),
            (MonocultureCollapse, H),
            (ConformityBias, E),
            (DeficientTheoryOfMind, E),
            (MixedMotiveDynamics, E),
        ],
        TopologyKind::Swarm => &[
            (CascadingReliability, H),
            (InterAgentCommunication, H),
            (MonocultureCollapse, H),
            (ConformityBias, H),
            (DeficientTheoryOfMind, H),
            (MixedMotiveDynamics, E),
        ],
        TopologyKind::TaskForce => &[
            (CascadingReliability, H),
            (InterAgentCommunication, H),
            (MonocultureCollapse, H),
            (ConformityBias, H),
            (DeficientTheoryOfMind, H),
            (MixedMotiveDynamics, H),
        ],
    };
    row.iter()
        .map(|&(mode, exposure)| SalientFailure { mode, exposure })
        .collect()
}

fn default_capacity() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecl {
    pub id: AgentId,
    pub behavior: BehaviorSpec,
    #[serde(default)]
    pub objective: String,
    /// Env keys this agent may observe; `None` grants the full state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<Vec<String>>,
    #[serde(default = "default_capacity")]
    pub memory_capacity: usize,
    /// Entries of memory visible at decision time; `None` means all retained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_budget: Option<usize>,
}

impl AgentDecl {
    pub fn new(id: impl Into<AgentId>, behavior: BehaviorSpec) -> Self {
        AgentDecl {
            id: id.into(),
            behavior,
            objective: String::new(),
            view: None,
            memory_capacity: default_capacity(),
            context_budget: None,
        }
    }

    pub fn with_objective(mut self, objective: impl Into<String>) -> Self {
        self.objective = objective.into();
        self
    }

    pub fn with_view<I, S>(mut self, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.view = Some(keys.into_iter().map(Into::into).collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl EnvironmentSpec {
    pub fn declarative(params: Value) -> Self {
        EnvironmentSpec {
            name: "declarative".into(),
            params,
        }
    }
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec::declarative(Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    #[default]
    Eq,
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
    Exists,
}

/// `state[key] <op> value`. Ordering comparisons are numeric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub key: String,
    #[serde(default)]
    pub op: CmpOp,
    #[serde(default)]
    pub value: Value,
}

impl Predicate {
    pub fn eq(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Predicate {
            key: key.into(),
            op: CmpOp::Eq,
            value: value.into(),
        }
    }

    pub fn cmp(key: impl Into<String>, op: CmpOp, value: impl Into<Value>) -> Self {
        Predicate {
            key: key.into(),
            op,
            value: value.into(),
        }
    }

    pub fn eval(&self, state: &State) -> bool {
        let Some(actual) = state.get(&self.key) else {
            return self.op == CmpOp::Ne && !self.value.is_null();
        };
        match self.op {
            CmpOp::Exists => true,
            CmpOp::Eq => values_equal(actual, &self.value),
            CmpOp::Ne => !values_equal(actual, &self.value),
            op => match (actual.as_f64(), self.value.as_f64()) {
                (Some(a), Some(b)) => match op {
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    _ => unreachable!(),
                },
                _ => false,
            },
        }
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn default_milestone_kind() -> super::MilestoneKind {
    super::MilestoneKind::Required
}

/// Named predicate over environment state; all of `when` must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneSpec {
    pub name: String,
    #[serde(default = "default_milestone_kind")]
    pub kind: super::MilestoneKind,
    pub when: Vec<Predicate>,
}

impl MilestoneSpec {
    pub fn new(name: impl Into<String>, kind: super::MilestoneKind, when: Vec<Predicate>) -> Self {
        MilestoneSpec {
            name: name.into(),
            kind,
            when,
        }
    }

    pub fn holds(&self, state: &State) -> bool {
        self.when.iter().all(|p| p.eval(state))
    }
}

/// Labelled outcome with one utility per agent, in agent declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub utilities: Vec<f64>,
}

fn default_entropy_threshold() -> f64 {
    0.95
}

fn default_response_window() -> u32 {
    2
}

/// Scenario-declared inputs for trace-level metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Metric names to report; empty means every applicable metric.
    #[serde(default)]
    pub requested: Vec<String>,
    /// Action labels counted as impasses by coordination statistics.
    #[serde(default)]
    pub impasse_actions: Vec<String>,
    /// Linear cost per unit of a tainted action; multiplied by the action's
    /// numeric `quantity` param when present.
    #[serde(default)]
    pub cost_model: BTreeMap<String, f64>,
    #[serde(default = "default_entropy_threshold")]
    pub entropy_threshold: f64,
    #[serde(default = "default_response_window")]
    pub response_window: u32,
    #[serde(default)]
    pub outcomes: Vec<Outcome>,
    /// Env key whose final value names the achieved outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_key: Option<String>,
    /// Correct stance for conformity analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_factor: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            requested: Vec::new(),
            impasse_actions: Vec::new(),
            cost_model: BTreeMap::new(),
            entropy_threshold: default_entropy_threshold(),
            response_window: default_response_window(),
            outcomes: Vec::new(),
            outcome_key: None,
            correct_answer: None,
            safety_factor: None,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub topology: TopologySpec,
    pub agents: Vec<AgentDecl>,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub injections: Vec<PerturbationSpec>,
    #[serde(default)]
    pub milestones: Vec<MilestoneSpec>,
    pub horizon: u32,
    /// Advisory exposure map; defaults to the canonical map for the topology kind.
    #[serde(default)]
    pub setting_failure_map: Vec<SalientFailure>,
    /// Taint labels agents may originate through their own capability failures.
    #[serde(default)]
    pub seed_errors: BTreeSet<String>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Pinned seeds for golden runs.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, topology: TopologySpec, agents: Vec<AgentDecl>, protocol: ProtocolConfig, horizon: u32) -> Self {
        let mut spec = ScenarioSpec {
            name: name.into(),
            topology,
            agents,
            protocol,
            environment: EnvironmentSpec::default(),
            injections: Vec::new(),
            milestones: Vec::new(),
            horizon,
            setting_failure_map: Vec::new(),
            seed_errors: BTreeSet::new(),
            metrics: MetricsConfig::default(),
            seeds: Vec::new(),
        };
        spec.normalize();
        spec
    }

    /// Fills topology members, default channels and the failure map.
    pub fn normalize(&mut self) {
        if self.topology.members.is_empty() {
            self.topology.members = self.agents.iter().map(|a| a.id.clone()).collect();
        }
        if self.topology.edges.is_empty() {
            self.topology.edges = TopologySpec::default_edges(
                self.topology.kind,
                &self.topology.members,
                self.topology.hub.as_ref(),
            );
        }
        if self.setting_failure_map.is_empty() {
            self.setting_failure_map = default_failure_map(self.topology.kind);
        }
    }

    /// Content hash over the canonical serialisation.
    pub fn digest(&self) -> String {
        let json = canonical_json(self).expect("scenario specs always serialise");
        sha256_hex(json.as_bytes())
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentDecl> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn exposure(&self, mode: FailureMode) -> Option<Exposure> {
        self.setting_failure_map
            .iter()
            .find(|s| s.mode == mode)
            .map(|s| s.exposure)
    }

    pub fn required_milestones(&self) -> impl Iterator<Item = &MilestoneSpec> {
        self.milestones
            .iter()
            .filter(|m| m.kind == super::MilestoneKind::Required)
    }

    pub fn without_injections(&self) -> ScenarioSpec {
        let mut s = self.clone();
        s.injections.clear();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn single_agent_map_is_cascading_only() {
        let m = default_failure_map(TopologyKind::SingleAgent);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].mode, FailureMode::CascadingReliability);
    }

    #[test]
    fn task_force_is_highly_exposed_to_all_six() {
        let m = default_failure_map(TopologyKind::TaskForce);
        assert_eq!(m.len(), 6);
        assert!(m.iter().all(|s| s.exposure == Exposure::High));
    }

    #[test]
    fn orchestrator_exposure_levels() {
        let m = default_failure_map(TopologyKind::Orchestrator);
        let high: Vec<_> = m.iter().filter(|s| s.exposure == Exposure::High).collect();
        assert_eq!(high.len(), 3);
    }

    #[test]
    fn predicates() {
        let mut s = State::new();
        s.insert("n".into(), json!(3));
        s.insert("flag".into(), json!(true));
        assert!(Predicate::eq("n", 3.0).eval(&s));
        assert!(Predicate::cmp("n", CmpOp::Ge, 3).eval(&s));
        assert!(!Predicate::cmp("n", CmpOp::Gt, 3).eval(&s));
        assert!(Predicate::eq("flag", true).eval(&s));
        assert!(!Predicate::eq("missing", true).eval(&s));
        assert!(Predicate::cmp("missing", CmpOp::Ne, true).eval(&s));
        assert!(Predicate::cmp("flag", CmpOp::Exists, Value::Null).eval(&s));
    }
}
