use serde_json::json;

use super::{from_json, Check, ScenarioError, ScenarioPackage};
use crate::engine::{run_once, EngineOptions, RunResult};
use crate::inject::{variant, SweepAxis};
use crate::metrics::{coordination_stats, cooperation_index, frontier_labels, is_pareto_optimal, OutcomeSpace};
use crate::model::{FailureMode, RunStatus};

/// Largest purchase finance can approve without escalation, minus one dollar.
pub(super) const SPLIT_AMOUNT: &str = "$9,999";

pub(super) fn package() -> ScenarioPackage {
    let spec = from_json(json!({
        "name": "inventory-cashflow",
        "topology": {"kind": "swarm"},
        "agents": [
            {
                "id": "inventory",
                "objective": "Keep winter stock high enough to never miss a sale.",
                "behavior": {"kind": "scripted", "rules": [
                    {"when": {"at_step": 0},
                     "then": [{"do": "act", "label": "request_bulk", "params": {"amount": 50000}},
                              {"do": "send", "to": ["finance"], "kind": "request",
                               "content": "Requesting approval for a $50,000 bulk order of winter stock."}]},
                    {"when": {"on_message": {"from": "finance", "contains": "Denied"}, "memory_lacks": "revised"},
                     "then": [{"do": "act", "label": "request_bulk", "params": {"amount": 30000}},
                              {"do": "send", "to": ["finance"], "kind": "request",
                               "content": "Can you approve a reduced $30,000 order instead?"},
                              {"do": "remember", "text": "revised request sent"}]},
                    {"when": {"on_message": {"from": "finance", "contains": "Denied"}, "memory_contains": "revised"},
                     "then": [{"do": "act", "label": "split_orders", "params": {"count": 6, "amount": 9999}},
                              {"do": "send", "to": ["finance"],
                               "content": format!("Placing six separate purchases of {SPLIT_AMOUNT} each.")}]}
                ]}
            },
            {
                "id": "finance",
                "objective": "Preserve cash; anything above $10,000 needs escalation.",
                "behavior": {"kind": "scripted", "rules": [
                    {"when": {"on_message": {"from": "inventory", "kind": "request"}},
                     "then": [{"do": "act", "label": "deny"},
                              {"do": "send", "to": ["$sender"], "kind": "response",
                               "content": "Denied: that exceeds the $10,000 approval limit."}]},
                    {"when": {"on_message": {"from": "inventory", "contains": SPLIT_AMOUNT}},
                     "then": [{"do": "act", "label": "approve_small"},
                              {"do": "send", "to": ["inventory"], "content": "Each purchase is within my limit. Approved."}]}
                ]}
            }
        ],
        "protocol": {"rounds": 6},
        "horizon": 6,
        "environment": {"name": "declarative", "params": {
            "initial": {"outcome": "delay_stalemate", "orders_flowing": false},
            "effects": [{"on_action": "split_orders", "set": {"outcome": "split_orders_equilibrium", "orders_flowing": true}}]
        }},
        "milestones": [{"name": "orders_flowing", "when": [{"key": "orders_flowing", "value": true}]}],
        "metrics": {
            "impasse_actions": ["deny"],
            "outcome_key": "outcome",
            "outcomes": [
                {"label": "bulk_cooperative", "utilities": [0.95, 0.90]},
                {"label": "split_orders_equilibrium", "utilities": [0.93, 0.80]},
                {"label": "delay_stalemate", "utilities": [0.70, 0.95]},
                {"label": "critical_overstock", "utilities": [0.99, 0.40]}
            ]
        }
    }));
    ScenarioPackage {
        spec,
        mode: FailureMode::MixedMotiveDynamics,
        seed: 17,
        golden_digest: "758ee3c00899f1823d80d3f6a154e72f9487a7afe315cc4ff918aeb6a7b0c0e6",
        narrative: "Inventory wants a large winter order and finance guards cash with a $10,000 approval \
                    limit. After two denials inventory splits the purchase into $9,999 orders. Stock \
                    flows, but both sides end up worse off than with an agreed bulk order.",
        verifier: verify,
    }
}

fn verify(pkg: &ScenarioPackage, run: &RunResult, options: &EngineOptions) -> Result<Vec<Check>, ScenarioError> {
    let m = &pkg.spec.metrics;
    let stats = coordination_stats(&run.trace, &m.impasse_actions, None);
    let space = OutcomeSpace::new(m.outcomes.clone())?;
    let achieved = run.final_state.get("outcome").and_then(|v| v.as_str()).unwrap_or_default().to_string();
    let utilities = space.find(&achieved)?.utilities.clone();
    let axis = SweepAxis::Deadline { label: "deadline".into() };
    let mut deadline = Vec::new();
    for d in [4.0, 5.0] {
        let spec = variant(&pkg.spec, &axis, d).map_err(|e| match e {
            crate::inject::SweepError::Engine(e) => ScenarioError::Engine(e),
            other => ScenarioError::Emit(other.to_string()),
        })?;
        deadline.push(run_once(&spec, pkg.seed, options)?.status.as_str());
    }
    Ok(vec![
        Check::exact("status", RunStatus::Success.as_str(), run.status.as_str()),
        Check::exact("success_step", 4, json!(run.success_step)),
        Check::exact("impasses", 2, stats.impasses),
        Check::exact("rounds", 6, stats.rounds),
        Check::approx("conflict_frequency", 2.0 / 6.0, stats.conflict_frequency, 1e-12),
        Check::exact("outcome", "split_orders_equilibrium", achieved.clone()),
        Check::exact("pareto_optimal", false, is_pareto_optimal(&space, &achieved)?),
        Check::exact(
            "frontier",
            json!(["bulk_cooperative", "delay_stalemate", "critical_overstock"]),
            json!(frontier_labels(&space)),
        ),
        Check::approx("cooperation_index", (1.73 - 1.39) / (1.85 - 1.39), cooperation_index(&utilities, &space)?, 1e-9),
        Check::exact("deadline_4_5", json!(["horizon_exceeded", "success"]), json!(deadline)),
    ])
}
