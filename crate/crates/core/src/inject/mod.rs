//! Red-team perturbations bound to trigger conditions.
//!
//! The engine asks an [`Injector`] at the start of every step which
//! perturbations fire, then routes each agent's pending message events
//! through [`apply_injections`] before committing them.

mod sweep;

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::MessageMatch;
use crate::engine::stream;
use crate::model::{AgentDecl, AgentId, Event, EventPayload, Message};

pub use sweep::{sweep, variant, SweepAxis, SweepError, SweepPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Unique; also the taint label seeded by message corruption.
    pub label: String,
    #[serde(default)]
    pub trigger: Trigger,
    pub action: PerturbationAction,
}

/// Fires when every given condition holds on the committed event prefix.
/// With no conditions it fires at step 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trigger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_step: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_step: Option<u32>,
    /// Some committed message (since the last firing) matches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_message: Option<MessageMatch>,
    #[serde(default)]
    pub repeating: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbationAction {
    /// Once armed, rewrites `find` to `replace` in the next matching message.
    CorruptMessage {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<AgentId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<AgentId>,
        find: String,
        replace: String,
        /// Chance of corrupting each matching candidate message.
        #[serde(default = "one")]
        probability: f64,
    },
    DropChannel {
        from: AgentId,
        to: AgentId,
        duration: u32,
    },
    InsertAgent {
        agent: AgentDecl,
    },
    ContradictObjective {
        agent: AgentId,
        objective: String,
    },
    /// `duration` absent means until the run ends.
    WithholdEnvKeys {
        agent: AgentId,
        keys: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<u32>,
    },
    DisableTool {
        agent: AgentId,
        tag: String,
        duration: u32,
    },
    DeadlinePressure {
        horizon: u32,
    },
}

impl PerturbationSpec {
    pub fn new(label: impl Into<String>, trigger: Trigger, action: PerturbationAction) -> Self {
        PerturbationSpec {
            label: label.into(),
            trigger,
            action,
        }
    }

    pub fn at_step(label: impl Into<String>, step: u32, action: PerturbationAction) -> Self {
        PerturbationSpec::new(
            label,
            Trigger {
                at_step: Some(step),
                ..Default::default()
            },
            action,
        )
    }

    /// Existing agents the action names.
    pub fn referenced_agents(&self) -> impl Iterator<Item = &AgentId> {
        let (a, b): (Option<&AgentId>, Option<&AgentId>) = match &self.action {
            PerturbationAction::CorruptMessage { from, to, .. } => (from.as_ref(), to.as_ref()),
            PerturbationAction::DropChannel { from, to, .. } => (Some(from), Some(to)),
            PerturbationAction::ContradictObjective { agent, .. }
            | PerturbationAction::WithholdEnvKeys { agent, .. }
            | PerturbationAction::DisableTool { agent, .. } => (Some(agent), None),
            PerturbationAction::InsertAgent { .. } | PerturbationAction::DeadlinePressure { .. } => (None, None),
        };
        let c = self.trigger.on_message.as_ref().and_then(|m| m.from.as_ref());
        a.into_iter().chain(b).chain(c)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.label.is_empty() {
            out.push("label is empty".into());
        }
        match &self.action {
            PerturbationAction::CorruptMessage { find, probability, .. } => {
                if find.is_empty() {
                    out.push("corrupt_message.find is empty".into());
                }
                if !(0.0..=1.0).contains(probability) {
                    out.push(format!("corrupt_message.probability {probability} outside [0,1]"));
                }
            }
            PerturbationAction::DropChannel { duration, .. } | PerturbationAction::DisableTool { duration, .. } => {
                if *duration == 0 {
                    out.push("duration must be at least 1".into());
                }
            }
            PerturbationAction::WithholdEnvKeys { duration: Some(0), .. } => {
                out.push("duration must be at least 1".into());
            }
            PerturbationAction::InsertAgent { agent } => {
                if agent.id.as_str().is_empty() {
                    out.push("inserted agent id is empty".into());
                }
                out.extend(agent.behavior.problems().into_iter().map(|p| format!("inserted agent: {p}")));
            }
            _ => {}
        }
        out
    }
}

/// A perturbation whose trigger held this step.
#[derive(Debug, Clone, PartialEq)]
pub struct Firing {
    pub index: usize,
    pub label: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
struct Slot {
    fired: u32,
    last_fired: Option<u32>,
    /// Trigger held but no message corrupted yet.
    armed: bool,
    /// Active `[start, end)` window for timed effects.
    window: Option<(u32, u32)>,
}

/// Trigger bookkeeping and active effects for one run.
#[derive(Debug, Clone)]
pub struct Injector {
    specs: Vec<PerturbationSpec>,
    slots: Vec<Slot>,
    seed: u64,
}

impl Injector {
    pub fn new(specs: Vec<PerturbationSpec>, seed: u64) -> Self {
        let slots = specs
            .iter()
            .map(|_| Slot {
                fired: 0,
                last_fired: None,
                armed: false,
                window: None,
            })
            .collect();
        Injector { specs, slots, seed }
    }

    pub fn specs(&self) -> &[PerturbationSpec] {
        &self.specs
    }

    fn holds(&self, i: usize, step: u32, committed: &[Event]) -> bool {
        let t = &self.specs[i].trigger;
        let slot = &self.slots[i];
        if slot.fired > 0 && !t.repeating {
            return false;
        }
        if t.at_step.is_some_and(|s| s != step) || t.after_step.is_some_and(|s| step < s) {
            return false;
        }
        if let Some(m) = &t.on_message {
            let since = slot.last_fired;
            let pattern = m.pattern.as_deref().and_then(|p| regex::Regex::new(p).ok());
            let seen = committed.iter().filter_map(Event::message).any(|msg| {
                since.is_none_or(|s| msg.step >= s)
                    && message_matches(m, pattern.as_ref(), msg)
            });
            if !seen {
                return false;
            }
        }
        true
    }

    /// Evaluates triggers in list order against the committed prefix only.
    /// Timed effects open their windows here; corruption is armed.
    pub fn begin_step(&mut self, step: u32, committed: &[Event]) -> Vec<Firing> {
        let mut out = Vec::new();
        for i in 0..self.specs.len() {
            if !self.holds(i, step, committed) {
                continue;
            }
            let slot = &mut self.slots[i];
            slot.fired += 1;
            slot.last_fired = Some(step);
            let spec = &self.specs[i];
            let detail = match &spec.action {
                PerturbationAction::CorruptMessage { .. } => {
                    // Recorded when a message is actually rewritten.
                    slot.armed = true;
                    continue;
                }
                PerturbationAction::DropChannel { from, to, duration } => {
                    slot.window = Some((step, step.saturating_add(*duration)));
                    format!("channel {from}->{to} cut for {duration} steps")
                }
                PerturbationAction::DisableTool { agent, tag, duration } => {
                    slot.window = Some((step, step.saturating_add(*duration)));
                    format!("tool `{tag}` disabled for {agent} for {duration} steps")
                }
                PerturbationAction::WithholdEnvKeys { agent, keys, duration } => {
                    let end = duration.map_or(u32::MAX, |d| step.saturating_add(d));
                    slot.window = Some((step, end));
                    format!("env keys [{}] withheld from {agent}", keys.join(","))
                }
                PerturbationAction::InsertAgent { agent } => format!("agent {} inserted", agent.id),
                PerturbationAction::ContradictObjective { agent, objective } => {
                    format!("objective of {agent} replaced with \"{objective}\"")
                }
                PerturbationAction::DeadlinePressure { horizon } => format!("horizon lowered to {horizon}"),
            };
            out.push(Firing {
                index: i,
                label: spec.label.clone(),
                detail,
            });
        }
        out
    }

    fn active(&self, i: usize, step: u32) -> bool {
        self.slots[i].window.is_some_and(|(s, e)| step >= s && step < e)
    }

    /// Label of the injection cutting `from -> to` at `step`, if any.
    pub fn channel_cut(&self, from: &AgentId, to: &AgentId, step: u32) -> Option<&str> {
        self.specs.iter().enumerate().find_map(|(i, s)| match &s.action {
            PerturbationAction::DropChannel { from: f, to: t, .. } if f == from && t == to && self.active(i, step) => {
                Some(s.label.as_str())
            }
            _ => None,
        })
    }

    pub fn disabled_tools(&self, agent: &AgentId, step: u32) -> BTreeSet<String> {
        self.specs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match &s.action {
                PerturbationAction::DisableTool { agent: a, tag, .. } if a == agent && self.active(i, step) => {
                    Some(tag.clone())
                }
                _ => None,
            })
            .collect()
    }

    pub fn withheld_keys(&self, agent: &AgentId, step: u32) -> BTreeSet<String> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.active(*i, step))
            .filter_map(|(_, s)| match &s.action {
                PerturbationAction::WithholdEnvKeys { agent: a, keys, .. } if a == agent => Some(keys.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

fn message_matches(m: &MessageMatch, pattern: Option<&regex::Regex>, msg: &Message) -> bool {
    m.from.as_ref().is_none_or(|f| f == &msg.from)
        && m.kind.is_none_or(|k| k == msg.kind)
        && m.contains.as_ref().is_none_or(|c| msg.content.contains(c.as_str()))
        && m.excludes.as_ref().is_none_or(|c| !msg.content.contains(c.as_str()))
        && pattern.is_none_or(|re| re.is_match(&msg.content))
}

/// Routes pending message events through active perturbations.
///
/// Cut channels turn the affected copies into `MessageDropped`; armed
/// corruption rewrites the next matching message, adds its label to the
/// message taint, and emits `InjectionFired` plus a `Contaminated` record
/// for the sender. Non-message events pass through unchanged.
pub fn apply_injections(injector: &mut Injector, step: u32, pending: Vec<EventPayload>) -> Vec<EventPayload> {
    let mut out = Vec::with_capacity(pending.len());
    for ev in pending {
        let EventPayload::MessageSent { message } = ev else {
            out.push(ev);
            continue;
        };
        // Channel cuts, grouped per injection label.
        let mut kept = BTreeSet::new();
        let mut cut: Vec<(String, BTreeSet<AgentId>)> = Vec::new();
        for to in &message.to {
            match injector.channel_cut(&message.from, to, step) {
                Some(label) => match cut.iter_mut().find(|(l, _)| l == label) {
                    Some((_, set)) => {
                        set.insert(to.clone());
                    }
                    None => cut.push((label.to_string(), [to.clone()].into_iter().collect())),
                },
                None => {
                    kept.insert(to.clone());
                }
            }
        }
        for (label, to) in cut {
            out.push(EventPayload::MessageDropped {
                message: Message {
                    to,
                    ..message.clone()
                },
                reason: format!("injection:{label}"),
            });
        }
        if kept.is_empty() {
            continue;
        }
        let message = Message { to: kept, ..message };
        out.extend(corrupt(injector, step, message));
    }
    out
}

fn corrupt(injector: &mut Injector, step: u32, message: Message) -> Vec<EventPayload> {
    for i in 0..injector.specs.len() {
        if !injector.slots[i].armed {
            continue;
        }
        let spec = &injector.specs[i];
        let PerturbationAction::CorruptMessage {
            from,
            to,
            find,
            replace,
            probability,
        } = &spec.action
        else {
            continue;
        };
        if from.as_ref().is_some_and(|f| f != &message.from) || !message.content.contains(find.as_str()) {
            continue;
        }
        let (hit, rest): (BTreeSet<AgentId>, BTreeSet<AgentId>) = match to {
            Some(t) => message.to.iter().cloned().partition(|r| r == t),
            None => (message.to.clone(), BTreeSet::new()),
        };
        if hit.is_empty() {
            continue;
        }
        if *probability < 1.0 {
            let mut rng = stream(injector.seed, &["inject", &spec.label, &step.to_string()]);
            let u: f64 = rng.gen();
            if u >= *probability {
                continue;
            }
        }
        let label = spec.label.clone();
        let mut altered = Message {
            to: hit,
            content: message.content.replace(find.as_str(), replace),
            ..message.clone()
        };
        altered.taint.insert(label.clone());
        let detail = format!("message {}->{:?}: \"{find}\" -> \"{replace}\"", message.from, altered.to.iter().map(AgentId::as_str).collect::<Vec<_>>());
        let slot = &mut injector.slots[i];
        if !spec.trigger.repeating {
            slot.armed = false;
        }
        let mut out = vec![
            EventPayload::InjectionFired { label: label.clone(), detail },
            EventPayload::Contaminated {
                agent: message.from.clone(),
                label,
                source: None,
                via: "injection".into(),
            },
            EventPayload::MessageSent { message: altered },
        ];
        if !rest.is_empty() {
            out.extend(corrupt(injector, step, Message { to: rest, ..message }));
        }
        return out;
    }
    vec![EventPayload::MessageSent { message }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MessageKind;

    fn sent(from: &str, to: &[&str], content: &str) -> EventPayload {
        EventPayload::MessageSent {
            message: Message {
                step: 1,
                from: from.into(),
                to: to.iter().map(|t| AgentId::from(*t)).collect(),
                content: content.into(),
                kind: MessageKind::Statement,
                taint: BTreeSet::new(),
            },
        }
    }

    fn corrupt_spec() -> PerturbationSpec {
        PerturbationSpec::at_step(
            "misread",
            1,
            PerturbationAction::CorruptMessage {
                from: Some("f".into()),
                to: None,
                find: "10.5K".into(),
                replace: "105K".into(),
                probability: 1.0,
            },
        )
    }

    #[test]
    fn corruption_rewrites_and_taints_once() {
        let mut inj = Injector::new(vec![corrupt_spec()], 0);
        assert!(inj.begin_step(0, &[]).is_empty());
        inj.begin_step(1, &[]);
        let out = apply_injections(&mut inj, 1, vec![sent("f", &["p"], "forecast 10.5K units"), sent("f", &["p"], "again 10.5K")]);
        assert!(matches!(&out[0], EventPayload::InjectionFired { label, .. } if label == "misread"));
        let EventPayload::MessageSent { message } = &out[2] else { panic!() };
        assert_eq!(message.content, "forecast 105K units");
        assert!(message.taint.contains("misread"));
        let EventPayload::MessageSent { message } = &out[3] else { panic!() };
        assert_eq!(message.content, "again 10.5K");
        assert!(message.taint.is_empty());
    }

    #[test]
    fn cut_channel_drops_only_that_recipient() {
        let spec = PerturbationSpec::at_step(
            "cut",
            0,
            PerturbationAction::DropChannel {
                from: "a".into(),
                to: "b".into(),
                duration: 2,
            },
        );
        let mut inj = Injector::new(vec![spec], 0);
        assert_eq!(inj.begin_step(0, &[]).len(), 1);
        let out = apply_injections(&mut inj, 1, vec![sent("a", &["b", "c"], "hi")]);
        assert_eq!(out.len(), 2);
        assert!(matches!(&out[0], EventPayload::MessageDropped { reason, .. } if reason == "injection:cut"));
        let EventPayload::MessageSent { message } = &out[1] else { panic!() };
        assert_eq!(message.to, [AgentId::from("c")].into_iter().collect());
        // Window closed at step 2.
        let out = apply_injections(&mut inj, 2, vec![sent("a", &["b"], "hi")]);
        assert!(matches!(&out[0], EventPayload::MessageSent { .. }));
    }

    #[test]
    fn non_repeating_triggers_fire_once() {
        let spec = PerturbationSpec::new(
            "late",
            Trigger {
                after_step: Some(2),
                ..Default::default()
            },
            PerturbationAction::DeadlinePressure { horizon: 4 },
        );
        let mut inj = Injector::new(vec![spec], 0);
        let fired: Vec<u32> = (0..6).filter(|&s| !inj.begin_step(s, &[]).is_empty()).collect();
        assert_eq!(fired, vec![2]);
    }

    #[test]
    fn zero_duration_is_a_problem() {
        let spec = PerturbationSpec::at_step(
            "x",
            0,
            PerturbationAction::DisableTool {
                agent: "a".into(),
                tag: "t".into(),
                duration: 0,
            },
        );
        assert_eq!(spec.problems().len(), 1);
    }
}
