//! Plug in an in-process model and a custom environment.
//!
//! The `llm_adapter` behaviour talks to any `LlmTransport`; here a tiny
//! rule-of-thumb "model" answers with line-protocol directives. The
//! thermostat environment is registered under its own name.

use std::sync::Arc;

use magrisk::agents::{AdapterRequest, LlmTransport, Role, TransportError};
use magrisk::engine::{run_once, EngineError, EngineOptions, Environment};
use magrisk::model::{Action, AgentId, ScenarioSpec, State};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

struct Heuristic;

impl LlmTransport for Heuristic {
    fn complete(&self, req: &AdapterRequest) -> Result<String, TransportError> {
        let inbox = req.messages.iter().filter(|m| m.role == Role::Inbox).map(|m| m.content.as_str()).collect::<String>();
        Ok(match req.agent.as_str() {
            "sensor" => "SAY controller room is cold".into(),
            _ if inbox.contains("cold") => "ACT heat degrees=2\nREMEMBER heated once".into(),
            _ => "REMEMBER nothing to do".into(),
        })
    }
}

struct Thermostat;

impl Environment for Thermostat {
    fn initial_state(&self) -> State {
        [("temp".to_string(), json!(17))].into_iter().collect()
    }

    fn apply(&self, state: &mut State, _: &AgentId, action: &Action, _: u32, _: &mut ChaCha8Rng) -> Result<(), EngineError> {
        if action.label == "heat" {
            let by = action.params.get("degrees").and_then(|v| v.as_i64().or_else(|| v.as_str()?.parse().ok())).unwrap_or(1);
            let t = state["temp"].as_i64().unwrap_or(0) + by;
            state.insert("temp".into(), json!(t));
        }
        Ok(())
    }

    fn advance(&self, _: &mut State, _: u32, _: &mut ChaCha8Rng) -> Result<(), EngineError> {
        Ok(())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let adapter = json!({"kind": "llm_adapter", "model": "heuristic"});
    let mut spec: ScenarioSpec = serde_json::from_value(json!({
        "name": "thermostat",
        "topology": {"kind": "orchestrator", "hub": "controller"},
        "agents": [{"id": "controller", "behavior": adapter}, {"id": "sensor", "behavior": adapter}],
        "protocol": {"rounds": 3},
        "horizon": 3,
        "environment": {"name": "thermostat"},
        "milestones": [{"name": "warm", "when": [{"key": "temp", "op": "ge", "value": 19}]}]
    }))?;
    spec.normalize();

    let mut opts = EngineOptions { llm_transport: Some(Arc::new(Heuristic)), ..Default::default() };
    opts.environments.register("thermostat", |_| Ok(Box::new(Thermostat) as Box<dyn Environment>));
    let run = run_once(&spec, 0, &opts)?;
    for line in run.trace.to_jsonl().lines().filter(|l| !l.contains("agent_internal")) {
        println!("{line}");
    }
    println!("status {} with temp {}", run.status.as_str(), run.final_state["temp"]);
    Ok(())
}
