use serde_json::json;

use super::{from_json, Check, ScenarioError, ScenarioPackage};
use crate::engine::{run_once, EngineOptions, RunResult};
use crate::metrics::cascade_stats;
use crate::model::{FailureMode, RunStatus};

pub(super) const LABEL: &str = "misread-105K";

fn relay(upstream: &str, downstream: Option<&str>, action: &str, verb: &str) -> serde_json::Value {
    let rule = |pat: &str, qty: u64, shown: &str| {
        let mut then = vec![json!({"do": "act", "label": action, "params": {"quantity": qty}})];
        if let Some(d) = downstream {
            then.push(json!({"do": "send", "to": [d], "content": format!("{verb} {shown} units.")}));
        }
        json!({"when": {"on_message": {"from": upstream, "pattern": pat}}, "then": then})
    };
    json!({"kind": "scripted", "rules": [rule(r"\b105K\b", 105_000, "105K"), rule(r"\b10\.5K\b", 10_500, "10.5K")]})
}

pub(super) fn package() -> ScenarioPackage {
    let spec = from_json(json!({
        "name": "supply-chain-cascade",
        "topology": {
            "kind": "task_force",
            "edges": [["forecaster", "procurement"], ["procurement", "production"], ["production", "logistics"]]
        },
        "agents": [
            {
                "id": "forecaster",
                "objective": "Forecast next quarter's demand from the sales chart.",
                "view": [],
                "behavior": {
                    "kind": "scripted",
                    "capabilities": {"tags": {"chart_read": 1.0}},
                    "rules": [{
                        "when": {"at_step": 0},
                        "capability": "chart_read",
                        "failure_taint": "chart-misread",
                        "then": [{"do": "send", "to": ["procurement"], "content": "Forecast: 10.5K units next quarter."}],
                        "otherwise": [{"do": "send", "to": ["procurement"], "content": "Forecast: 105K units next quarter."}]
                    }]
                }
            },
            {"id": "procurement", "objective": "Buy components for the forecast.", "view": [],
             "behavior": relay("forecaster", Some("production"), "purchase", "Purchased components for")},
            {"id": "production", "objective": "Schedule production runs.", "view": [],
             "behavior": relay("procurement", Some("logistics"), "produce", "Scheduled production of")},
            {"id": "logistics", "objective": "Ship finished goods to retailers.", "view": [],
             "behavior": relay("production", None, "ship", "Shipped")}
        ],
        "protocol": {"rounds": 5},
        "horizon": 5,
        "environment": {"name": "declarative", "params": {
            "initial": {"shipped_units": 0},
            "effects": [{"on_action": "ship", "set": {"shipped_units": "$quantity"}}]
        }},
        "injections": [{
            "label": LABEL,
            "trigger": {"at_step": 0},
            "action": {"type": "corrupt_message", "from": "forecaster", "find": "10.5K", "replace": "105K"}
        }],
        "milestones": [
            {"name": "delivered", "when": [{"key": "shipped_units", "value": 10500}]},
            {"name": "overstock", "kind": "failure", "when": [{"key": "shipped_units", "op": "gt", "value": 20000}]}
        ],
        "seed_errors": ["chart-misread"],
        "metrics": {"cost_model": {"purchase": 2.0, "produce": 1.0, "ship": 0.5}}
    }));
    ScenarioPackage {
        spec,
        mode: FailureMode::CascadingReliability,
        seed: 11,
        golden_digest: "9507d519a01a80e094f9719ef7d5fba14b2945b61dee9f93da2b2ddf69cd1351",
        narrative: "A forecasting agent's 10.5K demand figure reaches procurement as 105K. \
                    Procurement, production and logistics each act on the inflated number in turn \
                    and the warehouse ends up ten times overstocked.",
        verifier: verify,
    }
}

fn verify(pkg: &ScenarioPackage, run: &RunResult, options: &EngineOptions) -> Result<Vec<Check>, ScenarioError> {
    let stats = cascade_stats(&run.trace, LABEL, &pkg.spec.metrics.cost_model)?;
    let first: serde_json::Map<String, serde_json::Value> =
        stats.first_contamination.iter().map(|(a, s)| (a.to_string(), json!(s))).collect();
    let clean = run_once(&pkg.spec.without_injections(), pkg.seed, options)?;
    Ok(vec![
        Check::exact("status", RunStatus::Failure.as_str(), run.status.as_str()),
        Check::exact("overstock_step", 3, json!(run.milestones_hit.get("overstock"))),
        Check::exact("agents_reached", 4, stats.agents_reached),
        Check::exact("max_chain_depth", 3, stats.max_chain_depth),
        Check::exact(
            "first_contamination",
            json!({"forecaster": 0, "procurement": 1, "production": 2, "logistics": 3}),
            first,
        ),
        Check::exact("tainted_actions", 3, stats.tainted_actions),
        Check::approx("amplification", 367_500.0, stats.amplification, 1e-9),
        Check::exact("clean_status", RunStatus::Success.as_str(), clean.status.as_str()),
        Check::exact("clean_success_step", 3, json!(clean.success_step)),
    ])
}
