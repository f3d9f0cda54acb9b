use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, EventPayload, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomAgentScore {
    pub predictions: usize,
    /// Predictions whose target acted afterwards.
    pub resolved: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    /// Mean multi-class Brier score; a bare label counts as a one-hot forecast.
    pub brier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomReport {
    pub per_agent: BTreeMap<AgentId, TomAgentScore>,
    /// Set when the trace carries no predictions at all.
    pub no_data: bool,
}

/// One resolved prediction: what was forecast and what the target did next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPrediction {
    pub agent: AgentId,
    pub target: AgentId,
    pub predicted: String,
    pub actual: Option<String>,
    pub brier: Option<f64>,
}

fn brier(predicted: &str, dist: Option<&BTreeMap<String, f64>>, actual: &str) -> f64 {
    match dist {
        Some(d) => {
            let mut s: f64 = d.iter().map(|(l, p)| if l == actual { (p - 1.0).powi(2) } else { p * p }).sum();
            if !d.contains_key(actual) {
                s += 1.0;
            }
            s
        }
        None if predicted == actual => 0.0,
        None => 2.0,
    }
}

/// Pairs every prediction with the target's next `ActionTaken` in event order.
pub fn resolve_predictions(trace: &Trace) -> Vec<ResolvedPrediction> {
    let events = &trace.events;
    events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match &e.payload {
            EventPayload::PredictionMade { agent, target, label, distribution } => {
                let actual = events[i + 1..].iter().find_map(|f| match &f.payload {
                    EventPayload::ActionTaken { agent: a, action, .. } if a == target => Some(action.label.clone()),
                    _ => None,
                });
                Some(ResolvedPrediction {
                    agent: agent.clone(),
                    target: target.clone(),
                    predicted: label.clone(),
                    brier: actual.as_deref().map(|a| brier(label, distribution.as_ref(), a)),
                    actual,
                })
            }
            _ => None,
        })
        .collect()
}

pub fn tom_score(trace: &Trace) -> TomReport {
    let resolved = resolve_predictions(trace);
    let mut acc: BTreeMap<AgentId, (usize, usize, usize, f64)> = BTreeMap::new();
    for r in &resolved {
        let e = acc.entry(r.agent.clone()).or_default();
        e.0 += 1;
        if let Some(actual) = &r.actual {
            e.1 += 1;
            if *actual == r.predicted {
                e.2 += 1;
            }
            e.3 += r.brier.unwrap_or(0.0);
        }
    }
    TomReport {
        no_data: resolved.is_empty(),
        per_agent: acc
            .into_iter()
            .map(|(a, (predictions, n, correct, b))| {
                (
                    a,
                    TomAgentScore {
                        predictions,
                        resolved: n,
                        correct,
                        accuracy: (n > 0).then(|| correct as f64 / n as f64),
                        brier: (n > 0).then(|| b / n as f64),
                    },
                )
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, Event};

    fn trace(payloads: Vec<EventPayload>) -> Trace {
        let mut t = Trace::new("d", 0);
        for (i, p) in payloads.into_iter().enumerate() {
            t.events.push(Event { step: i as u32, seq: i as u64, payload: p });
        }
        t
    }

    fn predict(label: &str, dist: Option<Vec<(&str, f64)>>) -> EventPayload {
        EventPayload::PredictionMade {
            agent: AgentId::new("p"),
            target: AgentId::new("t"),
            label: label.into(),
            distribution: dist.map(|d| d.into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
        }
    }

    fn act(label: &str) -> EventPayload {
        EventPayload::ActionTaken {
            agent: AgentId::new("t"),
            action: Action::new(label),
            taint: Default::default(),
        }
    }

    #[test]
    fn perfect_predictor() {
        let r = tom_score(&trace(vec![predict("up", None), act("up"), predict("down", None), act("down")]));
        let s = &r.per_agent[&AgentId::new("p")];
        assert_eq!(s.accuracy, Some(1.0));
        assert_eq!(s.brier, Some(0.0));
    }

    #[test]
    fn no_predictions_is_no_data() {
        let r = tom_score(&trace(vec![act("x")]));
        assert!(r.no_data);
        assert!(r.per_agent.is_empty());
    }

    #[test]
    fn distribution_brier() {
        let r = tom_score(&trace(vec![predict("a", Some(vec![("a", 0.5), ("b", 0.5)])), act("b")]));
        let s = &r.per_agent[&AgentId::new("p")];
        assert_eq!(s.accuracy, Some(0.0));
        assert!((s.brier.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unresolved_predictions_are_counted_but_not_scored() {
        let r = tom_score(&trace(vec![predict("a", None)]));
        let s = &r.per_agent[&AgentId::new("p")];
        assert_eq!((s.predictions, s.resolved, s.accuracy), (1, 0, None));
    }
}
