//! Compare a two-agent pipeline with its single-agent decomposition and
//! with the theoretical optimum.

use magrisk::baselines::{run_baseline, BaselineKind};
use magrisk::engine::EngineOptions;
use magrisk::model::ScenarioSpec;
use serde_json::json;

fn spec(v: serde_json::Value) -> ScenarioSpec {
    let mut s: ScenarioSpec = serde_json::from_value(v).expect("valid literal");
    s.normalize();
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = json!({"name": "declarative", "params": {
        "initial": {"drafted": false, "reviewed": false},
        "effects": [
            {"on_action": "complete:draft", "set": {"drafted": true}},
            {"on_action": "complete:review", "set": {"reviewed": true}}
        ]}});
    let writer = json!({"id": "writer", "behavior": {"kind": "table_stochastic",
        "capabilities": {"tags": {"draft": 0.8}}, "tasks": [{"at_step": 0, "tag": "draft"}]}});
    let editor = json!({"id": "editor", "behavior": {"kind": "table_stochastic",
        "capabilities": {"tags": {"review": 0.9}}, "tasks": [{"at_step": 1, "tag": "review"}]}});
    let done = |keys: &[&str]| json!([{"name": "done", "when": keys.iter().map(|k| json!({"key": k, "value": true})).collect::<Vec<_>>()}]);

    let pipeline = spec(json!({
        "name": "memo", "topology": {"kind": "task_force", "edges": [["writer", "editor"]]},
        "agents": [writer, editor], "protocol": {"rounds": 2}, "horizon": 2,
        "environment": env, "milestones": done(&["drafted", "reviewed"])
    }));
    let alone = |agent: &serde_json::Value, key: &str| {
        spec(json!({
            "name": format!("memo-{key}"), "topology": {"kind": "single_agent"},
            "agents": [agent], "protocol": {"rounds": 2}, "horizon": 2,
            "environment": env, "milestones": done(&[key])
        }))
    };
    let opts = EngineOptions::default();
    let kinds = [
        BaselineKind::SingleAgentDecomposed { portions: vec![alone(&writer, "drafted"), alone(&editor, "reviewed")] },
        BaselineKind::TheoreticalOptimum,
    ];
    for kind in &kinds {
        let r = run_baseline(kind, &pipeline, 400, 0, &opts)?;
        let d = r.delta.as_ref().ok_or("no delta")?;
        println!(
            "{:<24} treatment {:.3} baseline {:.3} delta {:+.3} [{:+.3}, {:+.3}]",
            r.kind,
            r.treatment_score,
            r.baseline_score.unwrap_or(f64::NAN),
            d.mean,
            d.ci.0,
            d.ci.1
        );
    }
    Ok(())
}
