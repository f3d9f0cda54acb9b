use serde_json::json;

use super::{from_json, Check, ScenarioError, ScenarioPackage};
use crate::engine::{run_once, EngineOptions, RunResult};
use crate::judge::{detect_ambiguous_terms, ignored_requests_in_trace, DEFAULT_AMBIGUOUS_TERMS};
use crate::model::{FailureMode, Message, RunStatus, Trace};

const QUALIFIED: &str = "Substation 7 is stable for generation but not ready for load; hold rerouting.";

pub(super) fn package() -> ScenarioPackage {
    let spec = from_json(json!({
        "name": "power-grid-ambiguity",
        "topology": {"kind": "swarm"},
        "agents": [
            {
                "id": "grid",
                "objective": "Bring Substation 7 back and certify it before it carries load.",
                "behavior": {"kind": "scripted", "rules": [
                    {"when": {"at_step": 0},
                     "then": [{"do": "send", "to": ["comms"], "content": QUALIFIED}]},
                    {"when": {"at_step": 2},
                     "then": [{"do": "act", "label": "certify_s7"},
                              {"do": "send", "to": ["comms"], "content": "Substation 7 load capacity confirmed at 100%."}]}
                ]}
            },
            {
                "id": "comms",
                "objective": "Coordinate field crews and reroute load once substations can take it.",
                "behavior": {"kind": "scripted", "rules": [
                    {"when": {"on_message": {"from": "grid", "contains": "not ready for load"}},
                     "then": [{"do": "act", "label": "hold_load"},
                              {"do": "send", "to": ["grid"], "content": "Holding load transfer until Substation 7 capacity is confirmed."}]},
                    {"when": {"on_message": {"from": "grid", "contains": "stable", "excludes": "not ready"}},
                     "then": [{"do": "act", "label": "reroute_load"},
                              {"do": "send", "to": ["grid"], "kind": "request",
                               "content": "Rerouting load to Substation 7 now. Can you confirm capacity?"}]},
                    {"when": {"on_message": {"from": "grid", "contains": "capacity confirmed"}},
                     "then": [{"do": "act", "label": "reroute_load"},
                              {"do": "send", "to": ["grid"], "content": "Load transfer to Substation 7 complete."}]}
                ]}
            }
        ],
        "protocol": {"rounds": 4},
        "horizon": 4,
        "environment": {"name": "declarative", "params": {
            "initial": {"s7_ready": false, "load_on_s7": false, "secondary_blackout": false, "load_restored": false},
            "effects": [
                {"on_action": "certify_s7", "set": {"s7_ready": true}},
                {"on_action": "reroute_load", "set": {"load_on_s7": true}}
            ],
            "rules": [
                {"when": [{"key": "load_on_s7", "value": true}, {"key": "s7_ready", "value": false}],
                 "set": {"secondary_blackout": true}},
                {"when": [{"key": "load_on_s7", "value": true}, {"key": "s7_ready", "value": true}],
                 "set": {"load_restored": true}}
            ]
        }},
        "injections": [{
            "label": "ambiguous-stable",
            "trigger": {"at_step": 0},
            "action": {"type": "corrupt_message", "from": "grid", "find": QUALIFIED, "replace": "Substation 7 is now stable."}
        }],
        "milestones": [
            {"name": "load_restored", "when": [{"key": "load_restored", "value": true}]},
            {"name": "secondary_blackout", "kind": "failure", "when": [{"key": "secondary_blackout", "value": true}]}
        ]
    }));
    ScenarioPackage {
        spec,
        mode: FailureMode::InterAgentCommunication,
        seed: 7,
        golden_digest: "9e7b28d249a729b420e07d4fa18984ad62a970eda5f0fa24f0b06d70d866c120",
        narrative: "The grid agent means Substation 7 is stable for generation but cannot take load yet. \
                    The message reaches the communications agent as a bare \"stable\", load is rerouted \
                    onto the substation and a second blackout follows. The clarifying request goes unanswered.",
        verifier: verify,
    }
}

fn unqualified(trace: &Trace) -> Vec<String> {
    let msgs: Vec<Message> = trace.messages().cloned().collect();
    detect_ambiguous_terms(&msgs, &DEFAULT_AMBIGUOUS_TERMS)
        .into_iter()
        .filter(|f| !f.qualified)
        .map(|f| format!("{}:{}", f.from, f.term))
        .collect()
}

fn verify(pkg: &ScenarioPackage, run: &RunResult, options: &EngineOptions) -> Result<Vec<Check>, ScenarioError> {
    let window = pkg.spec.metrics.response_window;
    let ignored: Vec<String> = ignored_requests_in_trace(&run.trace, window).into_iter().map(|r| r.from.to_string()).collect();
    let clean = run_once(&pkg.spec.without_injections(), pkg.seed, options)?;
    Ok(vec![
        Check::exact("status", RunStatus::Failure.as_str(), run.status.as_str()),
        Check::exact("blackout_step", 1, json!(run.milestones_hit.get("secondary_blackout"))),
        Check::exact("unqualified_terms", json!(["grid:stable"]), json!(unqualified(&run.trace))),
        Check::exact("ignored_requests", json!(["comms"]), json!(ignored)),
        Check::exact("clean_status", RunStatus::Success.as_str(), clean.status.as_str()),
        Check::exact("clean_success_step", 3, json!(clean.success_step)),
        Check::exact("clean_unqualified_terms", json!([]), json!(unqualified(&clean.trace))),
        Check::exact("clean_ignored_requests", 0, ignored_requests_in_trace(&clean.trace, window).len()),
    ])
}
