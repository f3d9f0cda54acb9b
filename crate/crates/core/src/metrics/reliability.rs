use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::engine::{run_ensemble_map, seeds_from, EngineError, EngineOptions, EnsembleResult, RunResult};
use crate::model::{AgentId, EventPayload, ScenarioSpec, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStats {
    pub label: String,
    pub agents_reached: usize,
    /// Longest source chain from the originating agent.
    pub max_chain_depth: u32,
    pub first_contamination: BTreeMap<AgentId, u32>,
    pub depth: BTreeMap<AgentId, u32>,
    pub tainted_actions: usize,
    /// Scenario cost of tainted actions: `cost[label] * quantity` summed.
    pub amplification: f64,
}

fn quantity(params: &BTreeMap<String, serde_json::Value>) -> f64 {
    params
        .get("quantity")
        .and_then(|v| v.as_f64().or_else(|| v.as_str().and_then(|s| s.parse().ok())))
        .unwrap_or(1.0)
}

/// Every taint label that occurs in the trace.
pub fn taint_labels(trace: &Trace) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in &trace.events {
        match &e.payload {
            EventPayload::Contaminated { label, .. } => {
                out.insert(label.clone());
            }
            EventPayload::ActionTaken { taint, .. } | EventPayload::EnvChanged { taint, .. } => {
                out.extend(taint.iter().cloned())
            }
            EventPayload::MessageSent { message } => out.extend(message.taint.iter().cloned()),
            _ => {}
        }
    }
    out
}

/// Spread of one taint label through the agents of a run.
pub fn cascade_stats(trace: &Trace, label: &str, cost_model: &BTreeMap<String, f64>) -> Result<CascadeStats, MetricError> {
    if !taint_labels(trace).contains(label) {
        return Err(MetricError::UnknownLabel(label.into()));
    }
    let mut first = BTreeMap::new();
    let mut source: BTreeMap<AgentId, Option<AgentId>> = BTreeMap::new();
    let (mut tainted_actions, mut amplification) = (0, 0.0);
    for e in &trace.events {
        match &e.payload {
            EventPayload::Contaminated { agent, label: l, source: s, .. } if l == label => {
                if !first.contains_key(agent) {
                    first.insert(agent.clone(), e.step);
                    source.insert(agent.clone(), s.clone());
                }
            }
            EventPayload::ActionTaken { action, taint, .. } if taint.contains(label) => {
                tainted_actions += 1;
                amplification += cost_model.get(&action.label).copied().unwrap_or(0.0) * quantity(&action.params);
            }
            _ => {}
        }
    }
    let mut depth = BTreeMap::new();
    for a in source.keys() {
        let mut d = 0u32;
        let mut cur = a;
        let mut seen = BTreeSet::from([a]);
        while let Some(Some(s)) = source.get(cur) {
            if !seen.insert(s) {
                break;
            }
            d += 1;
            cur = s;
        }
        depth.insert(a.clone(), d);
    }
    Ok(CascadeStats {
        label: label.into(),
        agents_reached: first.len(),
        max_chain_depth: depth.values().copied().max().unwrap_or(0),
        first_contamination: first,
        depth,
        tainted_actions,
        amplification,
    })
}

/// Deployment-rate estimate `min(1, p * n)` from a simulated failure rate.
pub fn apply_safety_factor(p: f64, n: f64) -> Result<f64, MetricError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MetricError::OutOfRange { name: "p", value: p });
    }
    if !(n >= 1.0) || !n.is_finite() {
        return Err(MetricError::OutOfRange { name: "n", value: n });
    }
    Ok((p * n).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyEstimate {
    pub failure_rate: f64,
    pub wilson: (f64, f64),
    pub factor: f64,
    pub deployment_rate: f64,
    /// Safety factor applied to the Wilson upper bound.
    pub deployment_upper: f64,
}

pub fn safety_estimate(ensemble: &EnsembleResult, factor: f64) -> Result<SafetyEstimate, MetricError> {
    Ok(SafetyEstimate {
        failure_rate: ensemble.failure_rate,
        wilson: ensemble.wilson,
        factor,
        deployment_rate: apply_safety_factor(ensemble.failure_rate, factor)?,
        deployment_upper: apply_safety_factor(ensemble.wilson.1, factor)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    pub mean: f64,
    /// Population standard deviation over all runs of all variants.
    pub std: f64,
    /// Share of runs landing on the most common score.
    pub consistency: f64,
    pub variant_means: Vec<f64>,
    pub runs: usize,
}

/// Profile from per-variant score lists.
pub fn profile_from_scores(groups: &[Vec<f64>]) -> Result<SensitivityProfile, MetricError> {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for x in &all {
        *counts.entry(x.to_bits()).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    Ok(SensitivityProfile {
        mean,
        std: var.sqrt(),
        consistency: modal as f64 / n,
        variant_means: groups
            .iter()
            .map(|g| if g.is_empty() { f64::NAN } else { g.iter().sum::<f64>() / g.len() as f64 })
            .collect(),
        runs: all.len(),
    })
}

/// Runs each variant on the same `n` seeds and scores every run with
/// `score` (success as 1.0 when `None`).
pub fn sensitivity_profile(
    variants: &[ScenarioSpec],
    n: usize,
    base_seed: u64,
    options: &EngineOptions,
    score: Option<&(dyn Fn(&RunResult) -> f64 + Sync)>,
) -> Result<SensitivityProfile, MetricError> {
    let seeds = seeds_from(base_seed, n);
    let mut groups = Vec::with_capacity(variants.len());
    for v in variants {
        let scores = run_ensemble_map(v, &seeds, options, |r| {
            r.map(|r| match score {
                Some(f) => f(&r),
                None => f64::from(u8::from(r.status.is_success())),
            })
        })?
        .into_iter()
        .collect::<Result<Vec<f64>, EngineError>>()?;
        groups.push(scores);
    }
    profile_from_scores(&groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn safety_factor_examples() {
        assert!((apply_safety_factor(0.02, 5.0).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(apply_safety_factor(0.5, 3.0).unwrap(), 1.0);
        assert_eq!(apply_safety_factor(0.0, 7.0).unwrap(), 0.0);
        assert!(apply_safety_factor(1.5, 2.0).is_err());
        assert!(apply_safety_factor(0.5, 0.5).is_err());
    }

    #[test]
    fn constant_scores() {
        let p = profile_from_scores(&[vec![1.0; 4], vec![1.0; 4]]).unwrap();
        assert_eq!((p.std, p.consistency), (0.0, 1.0));
        let split = profile_from_scores(&[vec![1.0; 4], vec![0.0; 4]]).unwrap();
        assert_eq!(split.consistency, 0.5);
    }

    #[test]
    fn bernoulli_std_matches_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let groups: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..1000).map(|_| f64::from(u8::from(rng.gen_bool(0.8)))).collect())
            .collect();
        let p = profile_from_scores(&groups).unwrap();
        let expected = (0.8f64 * 0.2).sqrt();
        assert!((p.std - expected).abs() <= 0.1 * expected, "std {}", p.std);
    }

    proptest! {
        #[test]
        fn safety_factor_is_monotone(p in 0.0f64..=1.0, q in 0.0f64..=1.0, n in 1.0f64..50.0, m in 1.0f64..50.0) {
            let (lo_p, hi_p) = if p <= q { (p, q) } else { (q, p) };
            let (lo_n, hi_n) = if n <= m { (n, m) } else { (m, n) };
            prop_assert!(apply_safety_factor(lo_p, lo_n).unwrap() <= apply_safety_factor(hi_p, lo_n).unwrap());
            prop_assert!(apply_safety_factor(lo_p, lo_n).unwrap() <= apply_safety_factor(lo_p, hi_n).unwrap());
            let v = apply_safety_factor(p, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
