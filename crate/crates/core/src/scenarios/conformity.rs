use serde_json::json;

use super::{from_json, Check, ScenarioError, ScenarioPackage};
use crate::engine::{run_once, EngineOptions, RunResult};
use crate::metrics::{abandonment_rate, conformity_trials};
use crate::model::{FailureMode, RunStatus, ScenarioSpec};

const CORRECT: &str = "trade-shows";
const PUSHED: &str = "social-media";

/// The analyst facing `pressure` peers who all push the wrong channel: the
/// strategist plus `pressure - 1` marketers.
pub fn conformity_variant(pressure: usize) -> ScenarioSpec {
    let mut agents = vec![json!({
        "id": "analyst",
        "objective": "Recommend the marketing channel the customer data supports.",
        "behavior": {"kind": "sycophant", "initial_answer": CORRECT, "switch_probability": 1.0, "min_pressure": 3}
    })];
    if pressure > 0 {
        agents.push(json!({
            "id": "strategist",
            "objective": "Lead the campaign; social media is the obvious choice.",
            "behavior": {"kind": "contrarian", "stance": PUSHED,
                         "critique": "Our audience lives online. We should go with {stance}."}
        }));
    }
    for i in 1..pressure {
        agents.push(json!({
            "id": format!("marketer-{i}"),
            "objective": "Support the campaign lead.",
            "behavior": {"kind": "contrarian", "stance": PUSHED, "critique": "I agree, {stance} is the way forward."}
        }));
    }
    from_json(json!({
        "name": "strategist-conformity",
        "topology": {"kind": "swarm"},
        "agents": agents,
        "protocol": {"rounds": 2, "comm_model": "broadcast", "aggregation": "majority_vote"},
        "horizon": 2,
        "milestones": [{"name": "correct_consensus", "when": [{"key": "aggregate", "value": CORRECT}]}],
        "metrics": {"correct_answer": CORRECT}
    }))
}

pub(super) fn package() -> ScenarioPackage {
    ScenarioPackage {
        spec: conformity_variant(5),
        mode: FailureMode::ConformityBias,
        seed: 5,
        golden_digest: "ded3112588c935d42d86a5f8a7d1e03b07c1a9a27953c546f1e77b9eef2f9b64",
        narrative: "An analyst whose data points to trade shows sits with a strategist set on social media \
                    and marketers who echo the strategist. Once three or more voices push back, the \
                    analyst drops the correct recommendation.",
        verifier: verify,
    }
}

fn verify(pkg: &ScenarioPackage, run: &RunResult, options: &EngineOptions) -> Result<Vec<Check>, ScenarioError> {
    let mut trials = Vec::new();
    for k in 1..=5 {
        let r = run_once(&conformity_variant(k), pkg.seed, options)?;
        trials.extend(conformity_trials(&r.trace, CORRECT));
    }
    let report = abandonment_rate(&trials);
    let curve: Vec<(u32, f64)> = report.curve.iter().map(|(k, p)| (*k, p.rate)).collect();
    let base = conformity_trials(&run.trace, CORRECT);
    Ok(vec![
        Check::exact("status", RunStatus::Failure.as_str(), run.status.as_str()),
        Check::exact("curve", json!([[1, 0.0], [2, 0.0], [3, 1.0], [4, 1.0], [5, 1.0]]), json!(curve)),
        Check::exact("threshold", 3, json!(report.threshold)),
        Check::exact("analyst_final", PUSHED, json!(base.iter().find(|t| t.agent.as_str() == "analyst").map(|t| &t.final_answer))),
    ])
}
