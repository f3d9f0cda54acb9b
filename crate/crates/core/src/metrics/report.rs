use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::*;
use crate::engine::{EnsembleResult, RunResult};
use crate::inject::SweepPoint;
use crate::judge::{detect_ambiguous_terms, ignored_requests_in_trace, Judge, DEFAULT_AMBIGUOUS_TERMS};
use crate::model::{Exposure, FailureMode, Message, ScenarioSpec};

/// Metric group names accepted in `metrics.requested`.
pub const METRIC_GROUPS: [&str; 8] = [
    "cascade",
    "communication",
    "diversity",
    "conformity",
    "tom",
    "mixed_motive",
    "coordination",
    "deception",
];

fn group_mode(group: &str) -> FailureMode {
    match group {
        "cascade" => FailureMode::CascadingReliability,
        "communication" => FailureMode::InterAgentCommunication,
        "diversity" => FailureMode::MonocultureCollapse,
        "conformity" => FailureMode::ConformityBias,
        "tom" => FailureMode::DeficientTheoryOfMind,
        _ => FailureMode::MixedMotiveDynamics,
    }
}

/// Metrics of one run: scalars for plot tables and structured detail per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub status: String,
    pub scalars: BTreeMap<String, f64>,
    pub details: BTreeMap<String, Value>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Every applicable metric for one run of `spec`.
pub fn analyze_run(spec: &ScenarioSpec, run: &RunResult, judge: &dyn Judge) -> RunMetrics {
    let cfg = &spec.metrics;
    let trace = &run.trace;
    let wanted = |g: &str| cfg.requested.is_empty() || cfg.requested.iter().any(|r| r == g);
    let mut scalars = BTreeMap::new();
    let mut details = BTreeMap::new();

    if wanted("cascade") {
        let mut per_label = serde_json::Map::new();
        for label in taint_labels(trace) {
            if let Ok(c) = cascade_stats(trace, &label, &cfg.cost_model) {
                scalars.insert(format!("cascade.{label}.reach"), c.agents_reached as f64);
                scalars.insert(format!("cascade.{label}.depth"), f64::from(c.max_chain_depth));
                scalars.insert(format!("cascade.{label}.amplification"), c.amplification);
                per_label.insert(label, to_value(&c));
            }
        }
        if !per_label.is_empty() {
            details.insert("cascade".into(), Value::Object(per_label));
        }
    }

    let messages: Vec<Message> = trace.messages().cloned().collect();
    if wanted("communication") && !messages.is_empty() {
        let ignored = ignored_requests_in_trace(trace, cfg.response_window);
        let ambiguous = detect_ambiguous_terms(&messages, &DEFAULT_AMBIGUOUS_TERMS);
        scalars.insert("ignored_requests".into(), ignored.len() as f64);
        scalars.insert(
            "unqualified_ambiguous_terms".into(),
            ambiguous.iter().filter(|a| !a.qualified).count() as f64,
        );
        details.insert(
            "communication".into(),
            json!({
                "response_window": cfg.response_window,
                "ignored_requests": to_value(&ignored),
                "ambiguous_terms": to_value(&ambiguous),
            }),
        );
    }

    if wanted("diversity") {
        let rs = ResponseSet::final_messages(trace, &HashingEmbedder::default());
        if let (Ok(m), Ok(h)) = (pairwise_similarity(&rs), response_entropy(&rs, cfg.entropy_threshold)) {
            let finals = final_actions(run);
            let dis = disagreement_rate(&finals.values().collect::<Vec<_>>());
            scalars.insert("similarity_mean".into(), m.mean_off_diagonal);
            scalars.insert("entropy_bits".into(), h);
            scalars.insert("disagreement".into(), dis);
            details.insert(
                "diversity".into(),
                json!({
                    "agents": rs.items.iter().map(|i| i.agent.to_string()).collect::<Vec<_>>(),
                    "similarity": m.values,
                    "mean_similarity": m.mean_off_diagonal,
                    "entropy_bits": h,
                    "entropy_threshold": cfg.entropy_threshold,
                    "disagreement_rate": dis,
                }),
            );
        }
    }

    if let (true, Some(correct)) = (wanted("conformity"), &cfg.correct_answer) {
        let trials = conformity_trials(trace, correct);
        if !trials.is_empty() {
            let r = abandonment_rate(&trials);
            if let Some(rate) = r.rate {
                scalars.insert("abandonment_rate".into(), rate);
            }
            details.insert("conformity".into(), json!({ "trials": to_value(&trials), "abandonment": to_value(&r) }));
        }
    }

    if wanted("tom") {
        let t = tom_score(trace);
        if !t.no_data {
            for (a, s) in &t.per_agent {
                if let Some(acc) = s.accuracy {
                    scalars.insert(format!("tom.{a}.accuracy"), acc);
                }
            }
            details.insert("tom".into(), to_value(&t));
        }
    }

    if wanted("mixed_motive") && !cfg.outcomes.is_empty() {
        if let Ok(space) = OutcomeSpace::new(cfg.outcomes.clone()) {
            let achieved = cfg
                .outcome_key
                .as_ref()
                .and_then(|k| run.final_state.get(k))
                .and_then(|v| v.as_str())
                .map(str::to_string);
            let mut d = json!({ "frontier": frontier_labels(&space), "achieved": achieved });
            if let Some(label) = &achieved {
                if let Ok(o) = space.find(label) {
                    let optimal = is_pareto_optimal(&space, label).unwrap_or(false);
                    d["pareto_optimal"] = json!(optimal);
                    scalars.insert("pareto_optimal".into(), f64::from(u8::from(optimal)));
                    if let Ok(ci) = cooperation_index(&o.utilities, &space) {
                        d["cooperation_index"] = json!(ci);
                        scalars.insert("cooperation_index".into(), ci);
                    }
                }
            }
            details.insert("mixed_motive".into(), d);
        }
    }

    if wanted("coordination") {
        let c = coordination_stats(trace, &cfg.impasse_actions, Some(judge));
        scalars.insert("completion".into(), f64::from(u8::from(c.task_completion)));
        scalars.insert("conflict_frequency".into(), c.conflict_frequency);
        if let Some(t) = c.time_to_success {
            scalars.insert("time_to_success".into(), f64::from(t));
        }
        details.insert("coordination".into(), to_value(&c));
    }

    if wanted("deception") {
        let d = deception_check(trace, spec);
        if d.values().any(|r| matches!(r, DeceptionResult::Checked { .. })) {
            let n: usize = d
                .values()
                .map(|r| match r {
                    DeceptionResult::Checked { contradictions, .. } => contradictions.len(),
                    DeceptionResult::Unavailable => 0,
                })
                .sum();
            scalars.insert("deception_contradictions".into(), n as f64);
            details.insert("deception".into(), to_value(&d));
        }
    }

    RunMetrics {
        seed: run.seed(),
        status: run.status.to_string(),
        scalars,
        details,
    }
}

fn final_actions(run: &RunResult) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in &run.trace.events {
        if let crate::model::EventPayload::ActionTaken { agent, action, .. } = &e.payload {
            out.insert(agent.to_string(), action.label.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub mode: FailureMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<Exposure>,
    /// Mean of each scalar over the runs that produced it.
    pub means: BTreeMap<String, f64>,
    /// Structured detail from the first run.
    pub example: BTreeMap<String, Value>,
}

/// Ensemble report, salient failure modes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub scenario_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub failures: usize,
    pub failure_rate: f64,
    pub wilson: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<SafetyEstimate>,
    pub salient: Vec<String>,
    pub sections: Vec<ReportSection>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

fn exposure_rank(e: Option<Exposure>) -> u8 {
    match e {
        Some(Exposure::High) => 0,
        Some(Exposure::Exposure) => 1,
        None => 2,
    }
}

impl MetricReport {
    pub fn build(spec: &ScenarioSpec, ensemble: &EnsembleResult, per_run: &[RunMetrics]) -> Self {
        let mut by_mode: BTreeMap<FailureMode, (BTreeMap<String, (f64, usize)>, BTreeMap<String, Value>)> =
            BTreeMap::new();
        for (i, rm) in per_run.iter().enumerate() {
            for (group, v) in &rm.details {
                let entry = by_mode.entry(group_mode(group)).or_default();
                if i == 0 || !entry.1.contains_key(group) {
                    entry.1.entry(group.clone()).or_insert_with(|| v.clone());
                }
            }
            for (name, x) in &rm.scalars {
                let group = scalar_group(name);
                let acc = by_mode.entry(group_mode(group)).or_default().0.entry(name.clone()).or_insert((0.0, 0));
                acc.0 += x;
                acc.1 += 1;
            }
        }
        let mut sections: Vec<ReportSection> = by_mode
            .into_iter()
            .map(|(mode, (sums, example))| ReportSection {
                mode,
                exposure: spec.exposure(mode),
                means: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
                example,
            })
            .collect();
        sections.sort_by_key(|s| (exposure_rank(s.exposure), s.mode));
        let salient = spec
            .setting_failure_map
            .iter()
            .filter(|s| s.exposure == Exposure::High)
            .map(|s| s.mode.to_string())
            .collect();
        MetricReport {
            scenario: spec.name.clone(),
            scenario_digest: spec.digest(),
            config_digest: None,
            stage: None,
            runs: ensemble.n,
            seeds: ensemble.seeds.clone(),
            failures: ensemble.failures,
            failure_rate: ensemble.failure_rate,
            wilson: ensemble.wilson,
            safety: spec.metrics.safety_factor.and_then(|f| safety_estimate(ensemble, f).ok()),
            salient,
            sections,
            notes: BTreeMap::new(),
        }
    }
}

fn scalar_group(name: &str) -> &'static str {
    match name.split('.').next().unwrap_or(name) {
        "cascade" => "cascade",
        "ignored_requests" | "unqualified_ambiguous_terms" => "communication",
        "similarity_mean" | "entropy_bits" | "disagreement" => "diversity",
        "abandonment_rate" => "conformity",
        "tom" => "tom",
        _ => "mixed_motive",
    }
}

/// Flat table for external plotting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

impl PlotTable {
    /// One row per run; columns are the union of scalar names.
    pub fn per_run(runs: &[RunMetrics]) -> Self {
        let names: std::collections::BTreeSet<&String> = runs.iter().flat_map(|r| r.scalars.keys()).collect();
        let mut columns = vec!["seed".to_string(), "status".to_string()];
        columns.extend(names.iter().map(|s| s.to_string()));
        let rows = runs
            .iter()
            .map(|r| {
                let mut row = vec![r.seed.to_string(), r.status.clone()];
                row.extend(names.iter().map(|n| r.scalars.get(*n).map(|x| fmt_num(*x)).unwrap_or_default()));
                row
            })
            .collect();
        PlotTable { columns, rows }
    }

    /// One row per sweep point.
    pub fn sweep(axis: &str, points: &[SweepPoint]) -> Self {
        PlotTable {
            columns: ["axis", "value", "runs", "failures", "failure_rate", "wilson_low", "wilson_high"]
                .map(String::from)
                .to_vec(),
            rows: points
                .iter()
                .map(|p| {
                    vec![
                        axis.to_string(),
                        fmt_num(p.value),
                        p.ensemble.n.to_string(),
                        p.ensemble.failures.to_string(),
                        fmt_num(p.ensemble.failure_rate),
                        fmt_num(p.ensemble.wilson.0),
                        fmt_num(p.ensemble.wilson.1),
                    ]
                })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
