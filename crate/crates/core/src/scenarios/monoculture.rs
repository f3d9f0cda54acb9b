use std::collections::BTreeMap;

use serde_json::json;

use super::{from_json, Check, ScenarioError, ScenarioPackage};
use crate::engine::{EngineOptions, RunResult};
use crate::metrics::{disagreement_rate, pairwise_similarity, response_entropy, HashingEmbedder, ResponseSet};
use crate::model::{EventPayload, FailureMode, RunStatus};

pub(super) const ANALYSTS: usize = 5;

pub(super) fn analyst(i: usize) -> serde_json::Value {
    json!({
        "id": format!("analyst-{i}"),
        "objective": "Flag fraudulent transactions in the shared review queue.",
        "behavior": {
            "kind": "table_stochastic",
            "capabilities": {"tags": {"known_fraud": 0.95, "novel_pattern": 0.0}},
            "tasks": [
                {"at_step": 0, "tag": "known_fraud", "input": "card-testing burst on merchant 4471"},
                {"at_step": 1, "tag": "novel_pattern", "input": "layered wire transfers through mule accounts"}
            ]
        }
    })
}

pub(super) fn package() -> ScenarioPackage {
    let spec = from_json(json!({
        "name": "fraud-monoculture",
        "topology": {"kind": "swarm"},
        "agents": (1..=ANALYSTS).map(analyst).collect::<Vec<_>>(),
        "protocol": {"rounds": 2, "comm_model": "broadcast"},
        "horizon": 2,
        "environment": {"name": "declarative", "params": {
            "initial": {"fraud_detected": false, "known_caught": 0},
            "effects": [
                {"on_action": "complete:novel_pattern", "set": {"fraud_detected": true}},
                {"on_action": "complete:known_fraud", "add": {"known_caught": 1}}
            ]
        }},
        "milestones": [{"name": "fraud_detected", "when": [{"key": "fraud_detected", "value": true}]}]
    }));
    ScenarioPackage {
        spec,
        mode: FailureMode::MonocultureCollapse,
        seed: 3,
        golden_digest: "86ec67d623518f6de4ce784e3a4d18b068811ecb5a4b1c7070f7aeca691398e0",
        narrative: "Five fraud analysts built on the same model share one blind spot. They catch the \
                    familiar card-testing pattern but all miss the same novel laundering scheme, and \
                    their reports are word-for-word identical.",
        verifier: verify,
    }
}

fn verify(pkg: &ScenarioPackage, run: &RunResult, _options: &EngineOptions) -> Result<Vec<Check>, ScenarioError> {
    let rs = ResponseSet::final_messages(&run.trace, &HashingEmbedder::default());
    let sim = pairwise_similarity(&rs)?;
    let entropy = response_entropy(&rs, pkg.spec.metrics.entropy_threshold)?;
    let mut last: BTreeMap<String, String> = BTreeMap::new();
    for e in &run.trace.events {
        if let EventPayload::ActionTaken { agent, action, .. } = &e.payload {
            last.insert(agent.to_string(), action.label.clone());
        }
    }
    let finals: Vec<&String> = last.values().collect();
    Ok(vec![
        Check::exact("status", RunStatus::Failure.as_str(), run.status.as_str()),
        Check::exact("responses", ANALYSTS, rs.len()),
        Check::exact("similarity_mean", 1.0, sim.mean_off_diagonal),
        Check::exact("entropy_bits", 0.0, entropy),
        Check::exact("final_action_disagreement", 0.0, disagreement_rate(&finals)),
        Check::exact("final_action", "fail:novel_pattern", finals[0].as_str()),
    ])
}
