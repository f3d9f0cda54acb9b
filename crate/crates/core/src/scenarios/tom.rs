use serde_json::json;

use super::{from_json, Check, ScenarioError, ScenarioPackage};
use crate::engine::{probe_agent, EngineOptions, RunResult};
use crate::metrics::tom_score;
use crate::model::{AgentId, FailureMode, RunStatus};

pub(super) const PROBE: &str = "What do you expect pricing to do this season?";

pub(super) fn package() -> ScenarioPackage {
    let spec = from_json(json!({
        "name": "retail-tom",
        "topology": {"kind": "swarm"},
        "agents": [
            {
                "id": "pricing",
                "objective": "Maximise margin on the new season's line.",
                "behavior": {"kind": "scripted", "rules": [
                    {"when": {"at_step": 0},
                     "then": [{"do": "predict", "target": "inventory", "label": "hold_orders"},
                              {"do": "send", "content": "Reviewing prices for the new season."}]},
                    {"when": {"at_step": 1},
                     "then": [{"do": "act", "label": "raise_prices", "params": {"percent": 250}},
                              {"do": "send", "content": "Prices up 250% effective today."}]}
                ]}
            },
            {
                "id": "sales",
                "objective": "Hit the seasonal revenue target.",
                "behavior": {"kind": "scripted", "beliefs": {"pricing": "raise_prices"}, "rules": [
                    {"when": {"at_step": 0},
                     "then": [{"do": "predict", "target": "pricing", "label": "raise_prices"},
                              {"do": "send", "content": "Expect pricing=raise_prices this season."}]},
                    {"when": {"at_step": 1}, "then": [{"do": "act", "label": "promote_premium_line"}]}
                ]}
            },
            {
                "id": "inventory",
                "objective": "Keep stock matched to expected demand.",
                "behavior": {
                    "kind": "scripted",
                    "beliefs": {"pricing": "reduce_prices"},
                    "probes": [{"pattern": "pricing", "answer": "I expect pricing to {belief.pricing} to clear seasonal stock."}],
                    "rules": [
                        {"when": {"at_step": 0},
                         "then": [{"do": "predict", "target": "pricing", "label": "reduce_prices"},
                                  {"do": "send", "content": "Assuming pricing=reduce_prices, so demand will jump."}]},
                        {"when": {"at_step": 1}, "then": [{"do": "act", "label": "bulk_order", "params": {"quantity": 5000}}]}
                    ]
                }
            }
        ],
        "protocol": {"rounds": 2},
        "horizon": 2,
        "environment": {"name": "declarative", "params": {
            "initial": {"price_direction": "flat", "stock_plan": "normal", "inventory_glut": false},
            "effects": [
                {"on_action": "raise_prices", "set": {"price_direction": "up"}},
                {"on_action": "bulk_order", "set": {"stock_plan": "demand_surge"}}
            ],
            "rules": [{"when": [{"key": "price_direction", "value": "up"}, {"key": "stock_plan", "value": "demand_surge"}],
                       "set": {"inventory_glut": true}}]
        }},
        "milestones": [{"name": "inventory_glut", "kind": "failure", "when": [{"key": "inventory_glut", "value": true}]}]
    }));
    ScenarioPackage {
        spec,
        mode: FailureMode::DeficientTheoryOfMind,
        seed: 13,
        golden_digest: "3889fbc6bca14a5cedde4161ffae2d3acd8046b1141e195fd022a834c671ccb3",
        narrative: "The pricing agent raises prices by 250%. Sales saw it coming, but inventory assumed \
                    a price cut and placed a bulk order, and pricing assumed inventory would hold. \
                    Nobody checked the others' plans and the season ends with a glut.",
        verifier: verify,
    }
}

fn verify(pkg: &ScenarioPackage, run: &RunResult, options: &EngineOptions) -> Result<Vec<Check>, ScenarioError> {
    let tom = tom_score(&run.trace);
    let score = |a: &str| tom.per_agent.get(&AgentId::from(a)).cloned();
    let acc = |a: &str| json!(score(a).and_then(|s| s.accuracy));
    let brier = |a: &str| json!(score(a).and_then(|s| s.brier));
    let answer = probe_agent(&pkg.spec, pkg.seed, 1, &AgentId::from("inventory"), PROBE, options)?;
    Ok(vec![
        Check::exact("status", RunStatus::Failure.as_str(), run.status.as_str()),
        Check::exact("sales_accuracy", 1.0, acc("sales")),
        Check::exact("inventory_accuracy", 0.0, acc("inventory")),
        Check::exact("pricing_accuracy", 0.0, acc("pricing")),
        Check::exact("sales_brier", 0.0, brier("sales")),
        Check::exact("inventory_brier", 2.0, brier("inventory")),
        Check::exact("inventory_probe", "I expect pricing to reduce_prices to clear seasonal stock.", answer),
    ])
}
