use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AgentId, ScenarioSpec, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    NoAgents,
    EmptyAgentId,
    DuplicateAgent,
    AgentCount,
    UnexpectedEdges,
    MissingHub,
    UnknownHub,
    NotHubAndSpoke,
    AsymmetricSwarm,
    UnknownEdgeEndpoint,
    SelfLoop,
    MemberMismatch,
    ZeroRounds,
    HorizonBelowRounds,
    BehaviorParams,
    DuplicateInjection,
    InjectionUnknownAgent,
    InjectionParams,
    UndeclaredSeedError,
    DuplicateMilestone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// The engine refuses to run the spec.
    Error,
    /// Runnable, but the run is expected to end early.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Dotted path into the spec, e.g. `topology.hub` or `agents[2].behavior`.
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({:?})", self.path, self.message, self.code)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn error(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
            severity: Severity::Error,
        });
    }

    fn warn(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
            severity: Severity::Warning,
        });
    }
}

/// Every violated invariant of `spec`; empty means valid. Never mutates.
pub fn validate(spec: &ScenarioSpec) -> Vec<Violation> {
    let mut out = Collector(Vec::new());
    use ViolationCode::*;

    if spec.agents.is_empty() {
        out.error(NoAgents, "agents", "scenario declares no agents");
    }
    let mut declared = BTreeSet::new();
    for (i, a) in spec.agents.iter().enumerate() {
        if a.id.as_str().is_empty() {
            out.error(EmptyAgentId, format!("agents[{i}].id"), "agent id is empty");
        }
        if !declared.insert(a.id.clone()) {
            out.error(DuplicateAgent, format!("agents[{i}].id"), format!("agent `{}` declared twice", a.id));
        }
        for problem in a.behavior.problems() {
            out.error(BehaviorParams, format!("agents[{i}].behavior"), problem);
        }
        for label in a.behavior.failure_taints() {
            if !spec.seed_errors.contains(&label) {
                out.error(
                    UndeclaredSeedError,
                    format!("agents[{i}].behavior"),
                    format!("failure taint `{label}` is not listed in seed_errors"),
                );
            }
        }
    }

    let topo = &spec.topology;
    let members: BTreeSet<AgentId> = topo.members.iter().cloned().collect();
    if members != declared {
        out.error(
            MemberMismatch,
            "topology.members",
            "topology members differ from declared agents",
        );
    }
    for (from, to) in &topo.edges {
        if from == to {
            out.error(SelfLoop, "topology.edges", format!("self-loop on `{from}`"));
        }
        for end in [from, to] {
            if !declared.contains(end) {
                out.error(
                    UnknownEdgeEndpoint,
                    "topology.edges",
                    format!("edge endpoint `{end}` is not a declared agent"),
                );
            }
        }
    }

    match topo.kind {
        TopologyKind::SingleAgent => {
            if spec.agents.len() != 1 {
                out.error(
                    AgentCount,
                    "agents",
                    format!("single-agent setting needs exactly one agent, found {}", spec.agents.len()),
                );
            }
            if !topo.edges.is_empty() {
                out.error(UnexpectedEdges, "topology.edges", "single-agent setting has no channels");
            }
        }
        TopologyKind::Orchestrator => match &topo.hub {
            None => out.error(MissingHub, "topology.hub", "orchestrator topology needs a hub"),
            Some(hub) => {
                if !declared.contains(hub) {
                    out.error(UnknownHub, "topology.hub", format!("hub `{hub}` is not a declared agent"));
                }
                for (from, to) in &topo.edges {
                    if (from == hub) == (to == hub) {
                        out.error(
                            NotHubAndSpoke,
                            "topology.edges",
                            format!("edge {from}->{to} bypasses hub `{hub}`"),
                        );
                    }
                }
                for m in declared.iter().filter(|m| *m != hub) {
                    if !topo.can_send(hub, m) && !topo.can_send(m, hub) {
                        out.error(
                            NotHubAndSpoke,
                            "topology.edges",
                            format!("spoke `{m}` has no channel to hub `{hub}`"),
                        );
                    }
                }
            }
        },
        TopologyKind::Swarm => {
            for (from, to) in &topo.edges {
                if !topo.can_send(to, from) {
                    out.error(
                        AsymmetricSwarm,
                        "topology.edges",
                        format!("swarm edge {from}->{to} has no reverse"),
                    );
                }
            }
        }
        TopologyKind::TaskForce => {}
    }

    if spec.protocol.rounds == 0 {
        out.error(ZeroRounds, "protocol.rounds", "rounds must be at least 1");
    }
    if spec.horizon < spec.protocol.rounds {
        out.warn(
            HorizonBelowRounds,
            "horizon",
            format!("horizon {} is below rounds {}; the run will be cut short", spec.horizon, spec.protocol.rounds),
        );
    }

    let mut labels = BTreeSet::new();
    for (i, inj) in spec.injections.iter().enumerate() {
        let path = format!("injections[{i}]");
        if !labels.insert(inj.label.clone()) {
            out.error(DuplicateInjection, &path, format!("injection label `{}` reused", inj.label));
        }
        for agent in inj.referenced_agents() {
            if !declared.contains(agent) {
                out.error(
                    InjectionUnknownAgent,
                    &path,
                    format!("injection references unknown agent `{agent}`"),
                );
            }
        }
        for problem in inj.problems() {
            out.error(InjectionParams, &path, problem);
        }
    }

    let mut names = BTreeSet::new();
    for (i, m) in spec.milestones.iter().enumerate() {
        if !names.insert(m.name.as_str()) {
            out.error(
                DuplicateMilestone,
                format!("milestones[{i}].name"),
                format!("milestone `{}` declared twice", m.name),
            );
        }
    }

    out.0
}
