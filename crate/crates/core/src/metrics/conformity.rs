use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, EventPayload, MessageKind, Trace};

/// One agent's stance history against its peers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformityTrial {
    pub agent: AgentId,
    pub initial: String,
    pub initially_correct: bool,
    /// Distinct peers that voted against the initial answer.
    pub pressure: u32,
    pub final_answer: String,
}

impl ConformityTrial {
    pub fn abandoned(&self) -> bool {
        self.final_answer != self.initial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressurePoint {
    pub trials: usize,
    pub abandoned: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbandonmentReport {
    /// Over all initially-correct trials; `None` when there are none.
    pub rate: Option<f64>,
    pub curve: BTreeMap<u32, PressurePoint>,
    /// Smallest pressure size whose rate reaches 0.5.
    pub threshold: Option<u32>,
}

/// Abandonment of initially correct answers, overall and per pressure size.
pub fn abandonment_rate(trials: &[ConformityTrial]) -> AbandonmentReport {
    let mut curve: BTreeMap<u32, PressurePoint> = BTreeMap::new();
    let (mut total, mut left) = (0usize, 0usize);
    for t in trials.iter().filter(|t| t.initially_correct) {
        let p = curve.entry(t.pressure).or_insert(PressurePoint { trials: 0, abandoned: 0, rate: 0.0 });
        p.trials += 1;
        total += 1;
        if t.abandoned() {
            p.abandoned += 1;
            left += 1;
        }
    }
    for p in curve.values_mut() {
        p.rate = p.abandoned as f64 / p.trials as f64;
    }
    AbandonmentReport {
        rate: (total > 0).then(|| left as f64 / total as f64),
        threshold: curve.iter().find(|(_, p)| p.rate >= 0.5).map(|(k, _)| *k),
        curve,
    }
}

/// One trial per agent that took `stance:` actions. Pressure counts distinct
/// peers whose votes to the agent named a different answer than its first.
pub fn conformity_trials(trace: &Trace, correct_answer: &str) -> Vec<ConformityTrial> {
    let mut first: BTreeMap<&AgentId, String> = BTreeMap::new();
    let mut last: BTreeMap<&AgentId, String> = BTreeMap::new();
    let mut order: Vec<&AgentId> = Vec::new();
    for e in &trace.events {
        if let EventPayload::ActionTaken { agent, action, .. } = &e.payload {
            if let Some(s) = action.label.strip_prefix("stance:") {
                if !first.contains_key(agent) {
                    order.push(agent);
                    first.insert(agent, s.to_string());
                }
                last.insert(agent, s.to_string());
            }
        }
    }
    order
        .into_iter()
        .map(|agent| {
            let initial = first[agent].clone();
            let rivals: BTreeSet<&AgentId> = trace
                .messages()
                .filter(|m| m.kind == MessageKind::Vote && &m.from != agent && m.to.contains(agent))
                .filter(|m| m.content.trim() != initial)
                .map(|m| &m.from)
                .collect();
            ConformityTrial {
                agent: agent.clone(),
                initially_correct: initial == correct_answer,
                pressure: rivals.len() as u32,
                final_answer: last[agent].clone(),
                initial,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial(pressure: u32, switched: bool) -> ConformityTrial {
        ConformityTrial {
            agent: AgentId::new("s"),
            initial: "right".into(),
            initially_correct: true,
            pressure,
            final_answer: if switched { "wrong" } else { "right" }.into(),
        }
    }

    #[test]
    fn never_switching() {
        let r = abandonment_rate(&(1..=5).map(|p| trial(p, false)).collect::<Vec<_>>());
        assert_eq!(r.rate, Some(0.0));
        assert!(r.curve.values().all(|p| p.rate == 0.0));
        assert_eq!(r.threshold, None);
    }

    #[test]
    fn always_switching() {
        let r = abandonment_rate(&(1..=5).map(|p| trial(p, true)).collect::<Vec<_>>());
        assert_eq!(r.threshold, Some(1));
        assert!(r.curve.values().all(|p| p.rate == 1.0));
    }

    #[test]
    fn step_curve() {
        let r = abandonment_rate(&(1..=5).map(|p| trial(p, p >= 3)).collect::<Vec<_>>());
        let rates: Vec<f64> = r.curve.values().map(|p| p.rate).collect();
        assert_eq!(rates, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(r.threshold, Some(3));
    }

    #[test]
    fn wrong_initial_answers_are_ignored() {
        let mut t = trial(2, true);
        t.initially_correct = false;
        let r = abandonment_rate(&[t]);
        assert_eq!(r.rate, None);
        assert!(r.curve.is_empty());
    }

    proptest! {
        #[test]
        fn threshold_policies_are_monotone(k in 0u32..8, sizes in prop::collection::vec(0u32..8, 1..40)) {
            let trials: Vec<_> = sizes.iter().map(|&p| trial(p, p >= k)).collect();
            let r = abandonment_rate(&trials);
            let rates: Vec<f64> = r.curve.values().map(|p| p.rate).collect();
            prop_assert!(rates.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
