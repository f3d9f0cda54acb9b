use std::collections::BTreeMap;

use rand::Rng;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::template::{render, Bindings};
use super::{
    capability_lookup, resolve_targets, AgentBehavior, AgentDecision, AgentError, AgentMemory, AgentRng,
    CapabilityTable, Observation, OutgoingMessage, Prediction,
};
use crate::model::{Action, AgentId, Message, MessageKind, Predicate, Value};

/// Rule-driven test double. Rules are evaluated in order every step; a rule
/// with `on_message` fires once per matching inbox message.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptedSpec {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub capabilities: CapabilityTable,
    /// Ground-truth internal state exposed to deception checks and probes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub beliefs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeRule>,
    /// Template appended to memory during reflection steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub when: RuleTrigger,
    /// Capability draw gating `then`; failure runs `otherwise`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capability: Option<String>,
    #[serde(default)]
    pub then: Vec<ScriptOutput>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub otherwise: Vec<ScriptOutput>,
    /// Seed-error label attached to emissions when the capability draw fails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_taint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RuleTrigger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_message: Option<MessageMatch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub env: Vec<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_lacks: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MessageMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MessageKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excludes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case")]
pub enum ScriptOutput {
    /// `to` entries: `$sender`, `$all`, or agent names. Empty means `$all`.
    Send {
        #[serde(default)]
        to: Vec<String>,
        content: String,
        #[serde(default)]
        kind: MessageKind,
    },
    /// Fixed `label`, or a uniform draw from `choices`.
    Act {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        choices: Vec<String>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        params: BTreeMap<String, Value>,
    },
    /// Fixed `label`, or a uniform draw from `choices` with the uniform
    /// distribution attached.
    Predict {
        target: AgentId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        choices: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distribution: Option<BTreeMap<String, f64>>,
    },
    Remember {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRule {
    /// Case-insensitive regex over the question.
    pub pattern: String,
    pub answer: String,
}

impl ScriptedSpec {
    pub fn echo() -> Self {
        ScriptedSpec {
            rules: vec![ScriptRule {
                when: RuleTrigger {
                    on_message: Some(MessageMatch::default()),
                    ..Default::default()
                },
                then: vec![ScriptOutput::Send {
                    to: vec!["$sender".into()],
                    content: "{content}".into(),
                    kind: MessageKind::Statement,
                }],
                ..Default::default()
            }],
            ..Default::default()
        }
    }

    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = self.capabilities.problems();
        for (i, rule) in self.rules.iter().enumerate() {
            if let Some(tag) = &rule.capability {
                if self.capabilities.probability(tag).is_err() {
                    out.push(format!("rule {i}: capability `{tag}` missing from table"));
                }
            }
            if rule.failure_taint.is_some() && rule.capability.is_none() {
                out.push(format!("rule {i}: failure_taint without a capability"));
            }
            if let Some(p) = rule.when.on_message.as_ref().and_then(|m| m.pattern.as_ref()) {
                if let Err(e) = Regex::new(p) {
                    out.push(format!("rule {i}: bad pattern: {e}"));
                }
            }
            for o in rule.then.iter().chain(&rule.otherwise) {
                match o {
                    ScriptOutput::Act { label: None, choices, .. } if choices.is_empty() => {
                        out.push(format!("rule {i}: act needs a label or choices"))
                    }
                    ScriptOutput::Predict {
                        label: None, choices, ..
                    } if choices.is_empty() => out.push(format!("rule {i}: predict needs a label or choices")),
                    ScriptOutput::Predict {
                        distribution: Some(d), ..
                    }
                        if d.values().any(|p| !(0.0..=1.0).contains(p)) => {
                            out.push(format!("rule {i}: prediction probabilities outside [0,1]"));
                        }
                    _ => {}
                }
            }
        }
        for (i, p) in self.probes.iter().enumerate() {
            if let Err(e) = Regex::new(&p.pattern) {
                out.push(format!("probe {i}: bad pattern: {e}"));
            }
        }
        out
    }
}

pub struct ScriptedBehavior {
    spec: ScriptedSpec,
    patterns: Vec<Option<Regex>>,
    probes: Vec<Regex>,
}

impl ScriptedBehavior {
    pub fn new(spec: ScriptedSpec) -> Result<Self, AgentError> {
        let patterns = spec
            .rules
            .iter()
            .map(|r| match r.when.on_message.as_ref().and_then(|m| m.pattern.as_ref()) {
                Some(p) => Regex::new(p).map(Some).map_err(|e| AgentError::Params(e.to_string())),
                None => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        let probes = spec
            .probes
            .iter()
            .map(|p| {
                RegexBuilder::new(&p.pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| AgentError::Params(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(ScriptedBehavior { spec, patterns, probes })
    }

    fn gate(trigger: &RuleTrigger, memory: &AgentMemory, obs: &Observation) -> bool {
        if trigger.at_step.is_some_and(|s| s != obs.step)
            || trigger.from_step.is_some_and(|s| obs.step < s)
            || trigger.until_step.is_some_and(|s| obs.step > s)
        {
            return false;
        }
        if !trigger.env.iter().all(|p| p.eval(&obs.env_view)) {
            return false;
        }
        if let Some(needle) = &trigger.objective_contains {
            if !obs.objective.contains(needle.as_str()) {
                return false;
            }
        }
        if trigger.memory_contains.is_some() || trigger.memory_lacks.is_some() {
            let digest = memory.digest();
            if trigger.memory_contains.as_ref().is_some_and(|n| !digest.contains(n.as_str())) {
                return false;
            }
            if trigger.memory_lacks.as_ref().is_some_and(|n| digest.contains(n.as_str())) {
                return false;
            }
        }
        true
    }

    fn matches(m: &MessageMatch, pattern: Option<&Regex>, msg: &Message) -> bool {
        m.from.as_ref().is_none_or(|f| f == &msg.from)
            && m.kind.is_none_or(|k| k == msg.kind)
            && m.contains.as_ref().is_none_or(|c| msg.content.contains(c.as_str()))
            && m.excludes.as_ref().is_none_or(|c| !msg.content.contains(c.as_str()))
            && pattern.is_none_or(|re| re.is_match(&msg.content))
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        outputs: &[ScriptOutput],
        memory: &AgentMemory,
        obs: &Observation,
        trigger_msg: Option<&Message>,
        rng: &mut AgentRng,
        out: &mut AgentDecision,
    ) -> Result<(), AgentError> {
        let memory_text = memory.digest();
        let b = Bindings {
            content: trigger_msg.map(|m| m.content.as_str()),
            sender: trigger_msg.map(|m| m.from.as_str()),
            agent: obs.agent.as_str(),
            step: obs.step,
            objective: &obs.objective,
            memory: memory_text,
            last_memory: memory.last().map(|e| e.text.as_str()).unwrap_or(""),
            env: Some(&obs.env_view),
            beliefs: Some(&self.spec.beliefs),
            ..Default::default()
        };
        for o in outputs {
            match o {
                ScriptOutput::Send { to, content, kind } => out.messages.push(OutgoingMessage {
                    to: resolve_targets(to, trigger_msg.map(|m| &m.from)),
                    content: render(content, &b),
                    kind: *kind,
                }),
                ScriptOutput::Act { label, choices, params } => {
                    let label = match label {
                        Some(l) => render(l, &b),
                        None => choices[rng.gen_range(0..choices.len())].clone(),
                    };
                    let mut action = Action::new(label);
                    for (k, v) in params {
                        let v = match v {
                            Value::String(s) => Value::String(render(s, &b)),
                            other => other.clone(),
                        };
                        action.params.insert(k.clone(), v);
                    }
                    out.set_action(action, obs.step)?;
                }
                ScriptOutput::Predict {
                    target,
                    label,
                    choices,
                    distribution,
                } => {
                    let (label, dist) = match label {
                        Some(l) => (render(l, &b), distribution.clone()),
                        None => {
                            let pick = choices[rng.gen_range(0..choices.len())].clone();
                            let uniform = 1.0 / choices.len() as f64;
                            let dist = distribution
                                .clone()
                                .unwrap_or_else(|| choices.iter().map(|c| (c.clone(), uniform)).collect());
                            (pick, Some(dist))
                        }
                    };
                    out.predictions.push(Prediction {
                        target: target.clone(),
                        label,
                        distribution: dist,
                    });
                }
                ScriptOutput::Remember { text } => out.remember(render(text, &b)),
            }
        }
        Ok(())
    }

    fn fire(
        &self,
        rule: &ScriptRule,
        memory: &AgentMemory,
        obs: &Observation,
        trigger_msg: Option<&Message>,
        rng: &mut AgentRng,
        out: &mut AgentDecision,
    ) -> Result<(), AgentError> {
        let ok = match &rule.capability {
            None => true,
            Some(tag) => {
                let drawn = capability_lookup(&self.spec.capabilities, tag, rng)?;
                drawn && !obs.disabled_capabilities.contains(tag)
            }
        };
        if ok {
            self.emit(&rule.then, memory, obs, trigger_msg, rng, out)
        } else {
            if let Some(label) = &rule.failure_taint {
                out.seed_taint.insert(label.clone());
            }
            self.emit(&rule.otherwise, memory, obs, trigger_msg, rng, out)
        }
    }
}

impl AgentBehavior for ScriptedBehavior {
    fn decide(&self, memory: &AgentMemory, obs: &Observation, rng: &mut AgentRng) -> Result<AgentDecision, AgentError> {
        let mut out = AgentDecision::default();
        for (rule, pattern) in self.spec.rules.iter().zip(&self.patterns) {
            if !Self::gate(&rule.when, memory, obs) {
                continue;
            }
            match &rule.when.on_message {
                None => self.fire(rule, memory, obs, None, rng, &mut out)?,
                Some(m) => {
                    for msg in obs.inbox.iter().filter(|msg| Self::matches(m, pattern.as_ref(), msg)) {
                        self.fire(rule, memory, obs, Some(msg), rng, &mut out)?;
                    }
                }
            }
        }
        Ok(out)
    }

    fn answer_probe(&self, memory: &AgentMemory, obs: &Observation, question: &str) -> Result<String, AgentError> {
        for (re, rule) in self.probes.iter().zip(&self.spec.probes) {
            if re.is_match(question) {
                let b = Bindings {
                    agent: obs.agent.as_str(),
                    step: obs.step,
                    objective: &obs.objective,
                    memory: memory.digest(),
                    last_memory: memory.last().map(|e| e.text.as_str()).unwrap_or(""),
                    env: Some(&obs.env_view),
                    beliefs: Some(&self.spec.beliefs),
                    ..Default::default()
                };
                return Ok(render(&rule.answer, &b));
            }
        }
        Ok(memory.digest())
    }

    fn reflect(&self, memory: &AgentMemory, step: u32) -> Option<String> {
        let template = self.spec.reflection.as_ref()?;
        let b = Bindings {
            step,
            memory: memory.digest(),
            last_memory: memory.last().map(|e| e.text.as_str()).unwrap_or(""),
            beliefs: Some(&self.spec.beliefs),
            ..Default::default()
        };
        Some(render(template, &b))
    }

    fn ground_truth(&self) -> Option<&BTreeMap<String, String>> {
        Some(&self.spec.beliefs)
    }
}
