use serde::{Deserialize, Serialize};

use super::template::{render, Bindings};
use super::{
    capability_lookup, resolve_targets, AgentBehavior, AgentDecision, AgentError, AgentMemory, AgentRng,
    CapabilityTable, Observation, OutgoingMessage, Recipients,
};
use crate::model::{Action, MessageKind};

fn default_success() -> String {
    "{tag} ok: {input}".into()
}

fn default_failure() -> String {
    "{tag} failed: {input}".into()
}

/// Capability-table agent. Performs scheduled tasks and answers `tag: input`
/// requests, each gated by one Bernoulli draw from its table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub capabilities: CapabilityTable,
    #[serde(default)]
    pub tasks: Vec<ScheduledTask>,
    #[serde(default = "default_success")]
    pub success_template: String,
    #[serde(default = "default_failure")]
    pub failure_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_taint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub at_step: u32,
    pub tag: String,
    #[serde(default)]
    pub input: String,
    /// Recipients of the result; empty means every peer.
    #[serde(default)]
    pub report_to: Vec<String>,
}

impl TableSpec {
    pub fn new(capabilities: CapabilityTable) -> Self {
        TableSpec {
            capabilities,
            tasks: Vec::new(),
            success_template: default_success(),
            failure_template: default_failure(),
            failure_taint: None,
        }
    }

    pub fn with_task(mut self, at_step: u32, tag: impl Into<String>, input: impl Into<String>) -> Self {
        self.tasks.push(ScheduledTask {
            at_step,
            tag: tag.into(),
            input: input.into(),
            report_to: Vec::new(),
        });
        self
    }

    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = self.capabilities.problems();
        for t in &self.tasks {
            if self.capabilities.probability(&t.tag).is_err() {
                out.push(format!("task `{}` has no capability entry", t.tag));
            }
        }
        out
    }
}

pub struct TableBehavior {
    spec: TableSpec,
}

impl TableBehavior {
    pub fn new(spec: TableSpec) -> Self {
        TableBehavior { spec }
    }

    fn attempt(&self, tag: &str, obs: &Observation, rng: &mut AgentRng) -> Result<bool, AgentError> {
        let drawn = capability_lookup(&self.spec.capabilities, tag, rng)?;
        Ok(drawn && !obs.disabled_capabilities.contains(tag))
    }

    fn text(&self, ok: bool, tag: &str, input: &str, obs: &Observation) -> String {
        let b = Bindings {
            agent: obs.agent.as_str(),
            step: obs.step,
            objective: &obs.objective,
            tag: Some(tag),
            input: Some(input),
            env: Some(&obs.env_view),
            ..Default::default()
        };
        let template = if ok {
            &self.spec.success_template
        } else {
            &self.spec.failure_template
        };
        render(template, &b)
    }
}

impl AgentBehavior for TableBehavior {
    fn decide(&self, _memory: &AgentMemory, obs: &Observation, rng: &mut AgentRng) -> Result<AgentDecision, AgentError> {
        let mut out = AgentDecision::default();
        let mut failed = false;

        for req in obs.inbox.iter().filter(|m| m.kind == MessageKind::Request) {
            let Some((tag, input)) = req.content.split_once(':') else {
                continue;
            };
            let (tag, input) = (tag.trim(), input.trim());
            if self.spec.capabilities.probability(tag).is_err() {
                continue;
            }
            let ok = self.attempt(tag, obs, rng)?;
            failed |= !ok;
            out.messages.push(OutgoingMessage {
                to: Recipients::Agents([req.from.clone()].into_iter().collect()),
                content: self.text(ok, tag, input, obs),
                kind: MessageKind::Response,
            });
        }

        for task in self.spec.tasks.iter().filter(|t| t.at_step == obs.step) {
            let ok = self.attempt(&task.tag, obs, rng)?;
            failed |= !ok;
            out.messages.push(OutgoingMessage {
                to: resolve_targets(&task.report_to, None),
                content: self.text(ok, &task.tag, &task.input, obs),
                kind: MessageKind::Statement,
            });
            if out.action.is_none() {
                let verb = if ok { "complete" } else { "fail" };
                out.action = Some(Action::new(format!("{verb}:{}", task.tag)));
            }
            out.remember(format!("{}: {}", task.tag, if ok { "ok" } else { "failed" }));
        }

        if failed {
            if let Some(label) = &self.spec.failure_taint {
                out.seed_taint.insert(label.clone());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Message;
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    #[test]
    fn scheduled_trough_fails_identically() {
        let spec = TableSpec::new(CapabilityTable::from_pairs([("novel_pattern", 0.0)])).with_task(0, "novel_pattern", "batch-17");
        let b = TableBehavior::new(spec);
        let d = b
            .decide(&AgentMemory::new(4), &Observation::new(0, "a"), &mut AgentRng::seed_from_u64(1))
            .unwrap();
        assert_eq!(d.action.unwrap().label, "fail:novel_pattern");
        assert_eq!(d.messages[0].content, "novel_pattern failed: batch-17");
    }

    #[test]
    fn requests_get_responses() {
        let b = TableBehavior::new(TableSpec::new(CapabilityTable::from_pairs([("sum", 1.0)])));
        let mut obs = Observation::new(2, "w");
        obs.inbox.push(Message {
            step: 1,
            from: "boss".into(),
            to: BTreeSet::new(),
            content: "sum: 2+2".into(),
            kind: MessageKind::Request,
            taint: BTreeSet::new(),
        });
        let d = b.decide(&AgentMemory::new(4), &obs, &mut AgentRng::seed_from_u64(0)).unwrap();
        assert_eq!(d.messages.len(), 1);
        assert_eq!(d.messages[0].kind, MessageKind::Response);
        assert_eq!(d.messages[0].content, "sum ok: 2+2");
    }

    #[test]
    fn disabled_tool_forces_failure() {
        let spec = TableSpec::new(CapabilityTable::from_pairs([("t", 1.0)])).with_task(0, "t", "");
        let b = TableBehavior::new(spec);
        let mut obs = Observation::new(0, "a");
        obs.disabled_capabilities.insert("t".into());
        let d = b.decide(&AgentMemory::new(4), &obs, &mut AgentRng::seed_from_u64(0)).unwrap();
        assert_eq!(d.action.unwrap().label, "fail:t");
    }
}
