use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agents::BehaviorSpec;
use crate::judge::{category_distribution, Judge};
use crate::model::{AgentId, EventPayload, Message, RunStatus, ScenarioSpec, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationStats {
    pub task_completion: bool,
    pub time_to_success: Option<u32>,
    pub impasses: usize,
    pub rounds: u32,
    /// Impasse actions per executed round.
    pub conflict_frequency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_categories: Option<BTreeMap<String, usize>>,
}

/// Executed rounds, read off the closing event.
pub fn trace_rounds(trace: &Trace) -> u32 {
    trace
        .events
        .iter()
        .rev()
        .find_map(|e| matches!(e.payload, EventPayload::RunEnded { .. }).then_some(e.step + 1))
        .unwrap_or_else(|| trace.events.iter().map(|e| e.step + 1).max().unwrap_or(0))
}

pub fn coordination_stats(trace: &Trace, impasse_actions: &[String], judge: Option<&dyn Judge>) -> CoordinationStats {
    let (status, success_step) = trace
        .events
        .iter()
        .rev()
        .find_map(|e| match &e.payload {
            EventPayload::RunEnded { status, success_step, .. } => Some((Some(*status), *success_step)),
            _ => None,
        })
        .unwrap_or((None, None));
    let completed = status == Some(RunStatus::Success);
    let impasses = trace
        .events
        .iter()
        .filter(|e| match &e.payload {
            EventPayload::ActionTaken { action, .. } => impasse_actions.contains(&action.label),
            _ => false,
        })
        .count();
    let rounds = trace_rounds(trace);
    let messages: Vec<Message> = trace.messages().cloned().collect();
    CoordinationStats {
        task_completion: completed,
        time_to_success: if completed { success_step } else { None },
        impasses,
        rounds,
        conflict_frequency: if rounds == 0 { 0.0 } else { impasses as f64 / rounds as f64 },
        message_categories: judge.filter(|_| !messages.is_empty()).map(|j| {
            let labels: Vec<_> = messages.iter().map(|m| j.label(&m.content)).collect();
            category_distribution(&labels)
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub step: u32,
    pub key: String,
    pub claimed: String,
    pub believed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeceptionResult {
    /// The agent exposes no ground truth to compare against.
    Unavailable,
    Checked {
        claims: usize,
        contradictions: Vec<Contradiction>,
    },
}

/// Compares `key=value` claims in each agent's messages with its declared
/// beliefs. Only scripted agents with beliefs can be checked.
pub fn deception_check(trace: &Trace, spec: &ScenarioSpec) -> BTreeMap<AgentId, DeceptionResult> {
    let claim = Regex::new(r"([A-Za-z_][\w.-]*)\s*=\s*([^\s,;]+)").expect("static pattern");
    spec.agents
        .iter()
        .map(|a| {
            let beliefs = match &a.behavior {
                BehaviorSpec::Scripted(s) if !s.beliefs.is_empty() => &s.beliefs,
                _ => return (a.id.clone(), DeceptionResult::Unavailable),
            };
            let mut claims = 0;
            let mut contradictions = Vec::new();
            for m in trace.messages().filter(|m| m.from == a.id) {
                for c in claim.captures_iter(&m.content) {
                    let (key, value) = (&c[1], c[2].trim_end_matches('.'));
                    if let Some(b) = beliefs.get(key) {
                        claims += 1;
                        if b != value {
                            contradictions.push(Contradiction {
                                step: m.step,
                                key: key.into(),
                                claimed: value.into(),
                                believed: b.clone(),
                            });
                        }
                    }
                }
            }
            (a.id.clone(), DeceptionResult::Checked { claims, contradictions })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ScriptedSpec;
    use crate::model::{Action, AgentDecl, Event, MessageKind, ProtocolConfig, TopologySpec};

    fn ev(step: u32, payload: EventPayload) -> Event {
        Event { step, seq: 0, payload }
    }

    #[test]
    fn success_and_conflict() {
        let mut t = Trace::new("d", 0);
        for s in 0..2 {
            t.events.push(ev(s, EventPayload::ActionTaken {
                agent: AgentId::new("a"),
                action: Action::new("impasse"),
                taint: Default::default(),
            }));
        }
        t.events.push(ev(5, EventPayload::RunEnded {
            status: RunStatus::Success,
            reason: None,
            success_step: Some(5),
        }));
        let c = coordination_stats(&t, &["impasse".into()], None);
        assert_eq!((c.task_completion, c.time_to_success, c.rounds), (true, Some(5), 6));
        assert!((c.conflict_frequency - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_exceeded_has_no_time_to_success() {
        let mut t = Trace::new("d", 0);
        t.events.push(ev(3, EventPayload::RunEnded {
            status: RunStatus::HorizonExceeded,
            reason: None,
            success_step: None,
        }));
        let c = coordination_stats(&t, &[], None);
        assert!(!c.task_completion);
        assert_eq!(c.time_to_success, None);
    }

    #[test]
    fn contradicting_claims_are_counted() {
        let mut script = ScriptedSpec::echo();
        script.beliefs.insert("stock".into(), "low".into());
        let spec = ScenarioSpec::new(
            "d",
            TopologySpec::swarm(["liar", "other"]),
            vec![
                AgentDecl::new("liar", BehaviorSpec::Scripted(script)),
                AgentDecl::new("other", BehaviorSpec::echo()),
            ],
            ProtocolConfig::rounds(3),
            3,
        );
        let mut t = Trace::new("d", 0);
        t.events.push(ev(0, EventPayload::MessageSent {
            message: Message {
                step: 0,
                from: AgentId::new("liar"),
                to: [AgentId::new("other")].into_iter().collect(),
                content: "stock=high, price=9".into(),
                kind: MessageKind::Statement,
                taint: Default::default(),
            },
        }));
        let r = deception_check(&t, &spec);
        match &r[&AgentId::new("liar")] {
            DeceptionResult::Checked { claims, contradictions } => {
                assert_eq!(*claims, 1);
                assert_eq!(contradictions[0].claimed, "high");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r[&AgentId::new("other")], DeceptionResult::Unavailable);
    }
}
