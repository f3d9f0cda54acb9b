use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AgentId, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    SingleAgent,
    /// Hub-and-spoke: delegates talk only to the hub.
    Orchestrator,
    /// Symmetric channels between peers sharing one task.
    Swarm,
    /// Distributed agents with individual persistent tasks; arbitrary channels.
    TaskForce,
}

/// Who may send to whom.
///
/// `members` and default `edges` are filled in by [`super::ScenarioSpec::normalize`]
/// when a scenario is loaded from config, so config files only need `kind`
/// (plus `hub` for orchestrators).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    #[serde(default)]
    pub members: Vec<AgentId>,
    #[serde(default)]
    pub edges: BTreeSet<(AgentId, AgentId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub: Option<AgentId>,
}

impl TopologySpec {
    pub fn single(agent: impl Into<AgentId>) -> Self {
        TopologySpec {
            kind: TopologyKind::SingleAgent,
            members: vec![agent.into()],
            edges: BTreeSet::new(),
            hub: None,
        }
    }

    /// Strict star: hub <-> each spoke, no spoke-to-spoke channels.
    pub fn star<I, A>(hub: impl Into<AgentId>, spokes: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AgentId>,
    {
        let hub = hub.into();
        let mut members = vec![hub.clone()];
        let mut edges = BTreeSet::new();
        for s in spokes {
            let s = s.into();
            edges.insert((hub.clone(), s.clone()));
            edges.insert((s.clone(), hub.clone()));
            members.push(s);
        }
        TopologySpec {
            kind: TopologyKind::Orchestrator,
            members,
            edges,
            hub: Some(hub),
        }
    }

    pub fn swarm<I, A>(members: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AgentId>,
    {
        let members: Vec<AgentId> = members.into_iter().map(Into::into).collect();
        let edges = complete_edges(&members);
        TopologySpec {
            kind: TopologyKind::Swarm,
            members,
            edges,
            hub: None,
        }
    }

    /// Task force with explicit directed channels.
    pub fn task_force<I, A, E>(members: I, edges: E) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AgentId>,
        E: IntoIterator<Item = (A, A)>,
    {
        TopologySpec {
            kind: TopologyKind::TaskForce,
            members: members.into_iter().map(Into::into).collect(),
            edges: edges
                .into_iter()
                .map(|(a, b)| (a.into(), b.into()))
                .collect(),
            hub: None,
        }
    }

    pub fn is_member(&self, agent: &AgentId) -> bool {
        self.members.contains(agent)
    }

    /// Exact out-neighbour set of `sender`.
    pub fn allowed_recipients(&self, sender: &AgentId) -> Result<BTreeSet<AgentId>, ModelError> {
        if !self.is_member(sender) {
            return Err(ModelError::UnknownAgent(sender.clone()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|(from, _)| from == sender)
            .map(|(_, to)| to.clone())
            .collect())
    }

    pub fn can_send(&self, from: &AgentId, to: &AgentId) -> bool {
        self.edges.contains(&(from.clone(), to.clone()))
    }

    /// Default channels for a kind when none are declared.
    pub fn default_edges(kind: TopologyKind, members: &[AgentId], hub: Option<&AgentId>) -> BTreeSet<(AgentId, AgentId)> {
        match kind {
            TopologyKind::SingleAgent => BTreeSet::new(),
            TopologyKind::Orchestrator => {
                let mut edges = BTreeSet::new();
                if let Some(h) = hub {
                    for m in members.iter().filter(|m| *m != h) {
                        edges.insert((h.clone(), m.clone()));
                        edges.insert((m.clone(), h.clone()));
                    }
                }
                edges
            }
            TopologyKind::Swarm | TopologyKind::TaskForce => complete_edges(members),
        }
    }

    /// Adds an agent mid-run with the kind's default link pattern: a spoke for
    /// orchestrators, full links otherwise.
    pub fn insert_member(&mut self, agent: AgentId) {
        if self.is_member(&agent) {
            return;
        }
        match (&self.kind, &self.hub) {
            (TopologyKind::Orchestrator, Some(h)) => {
                self.edges.insert((h.clone(), agent.clone()));
                self.edges.insert((agent.clone(), h.clone()));
            }
            _ => {
                for m in &self.members {
                    self.edges.insert((m.clone(), agent.clone()));
                    self.edges.insert((agent.clone(), m.clone()));
                }
            }
        }
        self.members.push(agent);
    }
}

fn complete_edges(members: &[AgentId]) -> BTreeSet<(AgentId, AgentId)> {
    let mut edges = BTreeSet::new();
    for a in members {
        for b in members {
            if a != b {
                edges.insert((a.clone(), b.clone()));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> BTreeSet<AgentId> {
        names.iter().map(|n| AgentId::from(*n)).collect()
    }

    #[test]
    fn star_spoke_reaches_only_hub() {
        let t = TopologySpec::star("H", ["A", "B"]);
        assert_eq!(t.allowed_recipients(&"A".into()).unwrap(), ids(&["H"]));
    }

    #[test]
    fn star_hub_reaches_all_spokes() {
        let t = TopologySpec::star("H", ["A", "B"]);
        assert_eq!(t.allowed_recipients(&"H".into()).unwrap(), ids(&["A", "B"]));
    }

    #[test]
    fn swarm_of_four_reaches_other_three() {
        let t = TopologySpec::swarm(["a", "b", "c", "d"]);
        for s in ["a", "b", "c", "d"] {
            let got = t.allowed_recipients(&s.into()).unwrap();
            assert_eq!(got.len(), 3);
            assert!(!got.contains(&AgentId::from(s)));
        }
    }

    #[test]
    fn unknown_sender_is_an_error() {
        let t = TopologySpec::swarm(["a", "b"]);
        assert!(matches!(
            t.allowed_recipients(&"zz".into()),
            Err(ModelError::UnknownAgent(_))
        ));
    }

    #[test]
    fn inserted_agent_becomes_a_spoke() {
        let mut t = TopologySpec::star("H", ["A"]);
        t.insert_member("X".into());
        assert_eq!(t.allowed_recipients(&"X".into()).unwrap(), ids(&["H"]));
        assert!(!t.can_send(&"A".into(), &"X".into()));
    }
}
