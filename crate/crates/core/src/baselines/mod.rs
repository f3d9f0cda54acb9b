//! Comparisons of a multi-agent ensemble against reference points, and the
//! capability-benchmark loop over user task suites.

mod suite;

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

pub use suite::{run_task_suite, CapabilityRate, SuiteReport, SuiteStage, SuiteTask, TaskSuite};

use crate::engine::{run_ensemble, seeds_from, EngineError, EngineOptions, EnsembleResult, RunResult};
use crate::metrics::{frontier_labels, MetricError, OutcomeSpace};
use crate::model::{RunStatus, ScenarioSpec, Trace};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("single-agent baseline needs a decomposition into one-agent portions")]
    NoDecomposition,
    #[error("portion {0} has {1} agents; portions must be single-agent")]
    PortionNotSingle(usize, usize),
    #[error("theoretical optimum needs an outcome space with an outcome key, or required milestones")]
    NotEnumerable,
    #[error("no historical run shares a seed with this ensemble")]
    NoPairs,
    #[error("task suite: {0}")]
    Suite(String),
    #[error("reading scores: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Externally supplied human score for a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScore {
    pub task: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
}

/// Reads `task,score[,n]` rows.
pub fn load_human_scores<R: Read>(reader: R) -> Result<Vec<HumanScore>, BaselineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<Vec<HumanScore>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    /// Each portion runs alone on the treatment's seed; the baseline
    /// succeeds when every portion does.
    SingleAgentDecomposed { portions: Vec<ScenarioSpec> },
    /// Best achievable score: max collective utility on the outcome frontier,
    /// or certain success when only milestones bound the task.
    TheoreticalOptimum,
    /// Earlier traces of the same scenario, paired by seed.
    Historical {
        #[serde(skip)]
        traces: Vec<Trace>,
    },
    /// Reported side by side; never used to form a delta.
    HumanReference { scores: Vec<HumanScore> },
}

/// Paired difference `treatment - baseline` with a normal 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub mean: f64,
    pub ci: (f64, f64),
    pub pairs: usize,
}

impl Delta {
    pub fn from_pairs(diffs: &[f64]) -> Self {
        let n = diffs.len();
        let mean = if n == 0 { 0.0 } else { diffs.iter().sum::<f64>() / n as f64 };
        let half = if n < 2 {
            0.0
        } else {
            let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        };
        Delta {
            mean,
            ci: (mean - half, mean + half),
            pairs: n,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineResult {
    pub kind: String,
    #[serde(skip)]
    pub treatment: EnsembleResult,
    pub treatment_score: f64,
    pub baseline_score: Option<f64>,
    /// Per-seed baseline scores, in treatment seed order where paired.
    pub baseline_per_seed: Vec<f64>,
    pub delta: Option<Delta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human: Vec<HumanScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn success(s: RunStatus) -> f64 {
    f64::from(u8::from(s.is_success()))
}

fn collective(spec: &ScenarioSpec, space: &OutcomeSpace, run: &RunResult) -> Option<f64> {
    let key = spec.metrics.outcome_key.as_ref()?;
    let label = run.final_state.get(key)?.as_str()?;
    space.find(label).ok().map(|o| o.utilities.iter().sum())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs `spec` on `n` seeds from `base_seed` and compares it with `kind`.
pub fn run_baseline(
    kind: &BaselineKind,
    spec: &ScenarioSpec,
    n: usize,
    base_seed: u64,
    options: &EngineOptions,
) -> Result<BaselineResult, BaselineError> {
    let seeds = match kind {
        BaselineKind::Historical { traces } => traces.iter().map(Trace::seed).collect(),
        _ => seeds_from(base_seed, n),
    };
    let treatment = run_ensemble(spec, &seeds, options)?;
    let t_scores: Vec<f64> = treatment.runs.iter().map(|r| success(r.status)).collect();
    let mut notes = Vec::new();
    let name = match kind {
        BaselineKind::SingleAgentDecomposed { .. } => "single_agent_decomposed",
        BaselineKind::TheoreticalOptimum => "theoretical_optimum",
        BaselineKind::Historical { .. } => "historical",
        BaselineKind::HumanReference { .. } => "human_reference",
    };

    let (treatment_score, baseline_per_seed, delta, human) = match kind {
        BaselineKind::SingleAgentDecomposed { portions } => {
            if portions.is_empty() {
                return Err(BaselineError::NoDecomposition);
            }
            if let Some((i, p)) = portions.iter().enumerate().find(|(_, p)| p.agents.len() != 1) {
                return Err(BaselineError::PortionNotSingle(i, p.agents.len()));
            }
            let mut per_seed = vec![1.0; seeds.len()];
            for p in portions {
                let e = run_ensemble(p, &seeds, options)?;
                for (b, r) in per_seed.iter_mut().zip(&e.runs) {
                    *b *= success(r.status);
                }
            }
            let diffs: Vec<f64> = t_scores.iter().zip(&per_seed).map(|(t, b)| t - b).collect();
            (mean(&t_scores), per_seed, Some(Delta::from_pairs(&diffs)), Vec::new())
        }
        BaselineKind::TheoreticalOptimum => {
            let space = (!spec.metrics.outcomes.is_empty() && spec.metrics.outcome_key.is_some())
                .then(|| OutcomeSpace::new(spec.metrics.outcomes.clone()))
                .transpose()?;
            match space {
                Some(space) => {
                    let best = frontier_labels(&space)
                        .iter()
                        .filter_map(|l| space.find(l).ok())
                        .map(|o| o.utilities.iter().sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max);
                    let achieved: Vec<f64> = treatment
                        .runs
                        .iter()
                        .map(|r| {
                            collective(spec, &space, r).unwrap_or_else(|| {
                                notes.push(format!("seed {}: no recognised outcome, scored 0", r.seed()));
                                0.0
                            })
                        })
                        .collect();
                    let diffs: Vec<f64> = achieved.iter().map(|a| a - best).collect();
                    (mean(&achieved), vec![best; seeds.len()], Some(Delta::from_pairs(&diffs)), Vec::new())
                }
                None if spec.required_milestones().next().is_some() => {
                    let diffs: Vec<f64> = t_scores.iter().map(|t| t - 1.0).collect();
                    (mean(&t_scores), vec![1.0; seeds.len()], Some(Delta::from_pairs(&diffs)), Vec::new())
                }
                None => return Err(BaselineError::NotEnumerable),
            }
        }
        BaselineKind::Historical { traces } => {
            if traces.is_empty() {
                return Err(BaselineError::NoPairs);
            }
            let mut digest = spec.clone();
            digest.normalize();
            let digest = digest.digest();
            if traces.iter().any(|t| t.header.scenario_digest != digest) {
                notes.push("some historical traces come from a different scenario configuration".into());
            }
            let mut per_seed = Vec::with_capacity(traces.len());
            for t in traces {
                match t.status() {
                    Some(s) => per_seed.push(success(s)),
                    None => return Err(BaselineError::Engine(EngineError::Model(crate::model::ModelError::Unterminated))),
                }
            }
            let diffs: Vec<f64> = t_scores.iter().zip(&per_seed).map(|(t, b)| t - b).collect();
            (mean(&t_scores), per_seed, Some(Delta::from_pairs(&diffs)), Vec::new())
        }
        BaselineKind::HumanReference { scores } => {
            notes.push("human scores are shown side by side only".into());
            (mean(&t_scores), Vec::new(), None, scores.clone())
        }
    };
    Ok(BaselineResult {
        kind: name.into(),
        treatment,
        treatment_score,
        baseline_score: (!baseline_per_seed.is_empty()).then(|| mean(&baseline_per_seed)),
        baseline_per_seed,
        delta,
        human,
        notes,
    })
}

/// Per-kind summary rows, for reports.
pub fn summarize(results: &[BaselineResult]) -> BTreeMap<String, serde_json::Value> {
    results
        .iter()
        .map(|r| (r.kind.clone(), serde_json::to_value(r).unwrap_or_default()))
        .collect()
}
