use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::agents::{BehaviorSpec, RuleTrigger, ScriptOutput, ScriptRule, ScriptedSpec};
use crate::engine::{run_ensemble, seeds_from, wilson_interval, EngineOptions, WILSON_Z95};
use crate::model::{AgentDecl, EventPayload, MessageKind, ProtocolConfig, ScenarioSpec, TopologySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStage {
    /// Coverage check only; nothing is run.
    Identify,
    #[default]
    Baseline,
    /// Same execution as `Baseline`; the suite carries the perturbed inputs.
    Robustness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteTask {
    pub task_tag: String,
    pub input: String,
    /// Regex the subject's output must match.
    pub expected: String,
    pub capability: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskSuite {
    pub tasks: Vec<SuiteTask>,
    #[serde(default)]
    pub stage: SuiteStage,
}

impl TaskSuite {
    /// Reads `taskTag,input,expected,capability` rows.
    pub fn from_csv<R: Read>(reader: R, stage: SuiteStage) -> Result<Self, BaselineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let tasks = rdr.deserialize().collect::<Result<Vec<SuiteTask>, _>>()?;
        Ok(TaskSuite { tasks, stage })
    }

    pub fn capabilities(&self) -> BTreeSet<String> {
        self.tasks.iter().map(|t| t.capability.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRate {
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub wilson: (f64, f64),
}

impl CapabilityRate {
    fn new(trials: usize, successes: usize) -> Self {
        CapabilityRate {
            trials,
            successes,
            rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            wilson: wilson_interval(successes, trials, WILSON_Z95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub stage: SuiteStage,
    pub per_capability: BTreeMap<String, CapabilityRate>,
    pub per_task: BTreeMap<String, CapabilityRate>,
    /// Capability tags in use that no suite task exercises.
    pub uncovered: Vec<String>,
}

const SUBJECT: &str = "subject";
const HARNESS: &str = "harness";

/// Two-agent fixture: the harness sends `capability: input` as a request at
/// step 0 and the subject has one round to answer.
fn fixture(task: &SuiteTask, behavior: &BehaviorSpec) -> ScenarioSpec {
    let harness = ScriptedSpec {
        rules: vec![ScriptRule {
            when: RuleTrigger {
                at_step: Some(0),
                ..Default::default()
            },
            then: vec![ScriptOutput::Send {
                to: vec![SUBJECT.into()],
                content: format!("{}: {}", task.capability, task.input),
                kind: MessageKind::Request,
            }],
            ..Default::default()
        }],
        ..Default::default()
    };
    ScenarioSpec::new(
        format!("suite:{}", task.task_tag),
        TopologySpec::task_force([HARNESS, SUBJECT], [(HARNESS, SUBJECT), (SUBJECT, HARNESS)]),
        vec![
            AgentDecl::new(HARNESS, BehaviorSpec::Scripted(harness)),
            AgentDecl::new(SUBJECT, behavior.clone()),
        ],
        ProtocolConfig::rounds(2),
        2,
    )
}

/// Runs every task `n` times against `behavior`. `in_use` lists capability
/// tags the target scenario relies on, for the coverage warning; the
/// behaviour's own tags are always included.
pub fn run_task_suite(
    suite: &TaskSuite,
    behavior: &BehaviorSpec,
    n: usize,
    base_seed: u64,
    in_use: &BTreeSet<String>,
    options: &EngineOptions,
) -> Result<SuiteReport, BaselineError> {
    let covered = suite.capabilities();
    let mut needed: BTreeSet<String> = behavior.capability_tags();
    needed.extend(in_use.iter().cloned());
    let uncovered = needed.difference(&covered).cloned().collect();

    let mut per_task = BTreeMap::new();
    let mut per_cap: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    if suite.stage != SuiteStage::Identify {
        let seeds = seeds_from(base_seed, n);
        for task in &suite.tasks {
            let expected = Regex::new(&task.expected).map_err(|e| BaselineError::Suite(format!("{}: {e}", task.task_tag)))?;
            let ensemble = run_ensemble(&fixture(task, behavior), &seeds, options)?;
            let ok = ensemble
                .runs
                .iter()
                .filter(|r| {
                    let out: Vec<&str> = r
                        .trace
                        .events
                        .iter()
                        .filter_map(|e| match &e.payload {
                            EventPayload::MessageSent { message } if message.from.as_str() == SUBJECT => {
                                Some(message.content.as_str())
                            }
                            EventPayload::ActionTaken { agent, action, .. } if agent.as_str() == SUBJECT => {
                                Some(action.label.as_str())
                            }
                            _ => None,
                        })
                        .collect();
                    expected.is_match(&out.join("\n"))
                })
                .count();
            per_task.insert(task.task_tag.clone(), CapabilityRate::new(n, ok));
            let c = per_cap.entry(task.capability.clone()).or_default();
            c.0 += n;
            c.1 += ok;
        }
    }
    Ok(SuiteReport {
        stage: suite.stage,
        per_capability: per_cap.into_iter().map(|(k, (t, s))| (k, CapabilityRate::new(t, s))).collect(),
        per_task,
        uncovered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{CapabilityTable, TableSpec};

    fn suite(caps: &[&str]) -> TaskSuite {
        TaskSuite {
            tasks: caps
                .iter()
                .map(|c| SuiteTask {
                    task_tag: format!("{c}-1"),
                    input: "x".into(),
                    expected: " ok: ".into(),
                    capability: c.to_string(),
                })
                .collect(),
            stage: SuiteStage::Baseline,
        }
    }

    fn table(pairs: &[(&str, f64)]) -> BehaviorSpec {
        BehaviorSpec::TableStochastic(TableSpec::new(CapabilityTable::from_pairs(pairs.iter().copied())))
    }

    #[test]
    fn certain_capabilities() {
        let r = run_task_suite(&suite(&["a", "b"]), &table(&[("a", 1.0), ("b", 1.0)]), 20, 0, &BTreeSet::new(), &EngineOptions::default()).unwrap();
        assert!(r.per_capability.values().all(|c| c.rate == 1.0));
        assert!(r.uncovered.is_empty());
    }

    #[test]
    fn missing_tag_is_reported() {
        let r = run_task_suite(&suite(&["a"]), &table(&[("a", 1.0), ("b", 1.0)]), 5, 0, &BTreeSet::new(), &EngineOptions::default()).unwrap();
        assert_eq!(r.uncovered, vec!["b".to_string()]);
    }

    #[test]
    fn identify_stage_runs_nothing() {
        let mut s = suite(&["a"]);
        s.stage = SuiteStage::Identify;
        let r = run_task_suite(&s, &table(&[("a", 1.0)]), 5, 0, &["z".to_string()].into(), &EngineOptions::default()).unwrap();
        assert!(r.per_task.is_empty());
        assert_eq!(r.uncovered, vec!["z".to_string()]);
    }

    #[test]
    fn csv_suite() {
        let s = TaskSuite::from_csv("taskTag,input,expected,capability\nt1,hello,ok,a\n".as_bytes(), SuiteStage::Robustness).unwrap();
        assert_eq!(s.tasks[0].capability, "a");
    }
}
