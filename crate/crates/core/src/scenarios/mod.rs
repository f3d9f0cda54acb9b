//! Pre-built scenario packages, one per failure mode, each pinned to a seed
//! with a hand-derived oracle and a frozen golden trace digest.

mod ambiguity;
mod cascade;
mod conformity;
mod mixed;
mod monoculture;
mod tom;

use serde::Serialize;
use serde_json::Value;

pub use conformity::conformity_variant;

use crate::engine::{run_once, EngineError, EngineOptions, RunResult};
use crate::model::{FailureMode, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("no scenario named `{0}`; try one of: {names}", names = NAMES.join(", "))]
    Unknown(String),
    #[error("emitting scenario: {0}")]
    Emit(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

pub const NAMES: [&str; 6] = [
    "supply-chain-cascade",
    "power-grid-ambiguity",
    "fraud-monoculture",
    "strategist-conformity",
    "retail-tom",
    "inventory-cashflow",
];

type Verifier = fn(&ScenarioPackage, &RunResult, &EngineOptions) -> Result<Vec<Check>, ScenarioError>;

#[derive(Clone)]
pub struct ScenarioPackage {
    pub spec: ScenarioSpec,
    pub mode: FailureMode,
    /// Seed the oracle was derived on.
    pub seed: u64,
    pub golden_digest: &'static str,
    pub narrative: &'static str,
    verifier: Verifier,
}

impl std::fmt::Debug for ScenarioPackage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioPackage")
            .field("name", &self.spec.name)
            .field("mode", &self.mode)
            .field("seed", &self.seed)
            .finish()
    }
}

/// One expected-vs-observed comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: Value,
    pub observed: Value,
    #[serde(skip_serializing_if = "is_zero")]
    pub tolerance: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Check {
    pub fn exact(name: impl Into<String>, expected: impl Into<Value>, observed: impl Into<Value>) -> Self {
        Check {
            name: name.into(),
            expected: expected.into(),
            observed: observed.into(),
            tolerance: 0.0,
        }
    }

    pub fn approx(name: impl Into<String>, expected: f64, observed: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            expected: expected.into(),
            observed: observed.into(),
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        match (self.expected.as_f64(), self.observed.as_f64()) {
            (Some(e), Some(o)) => (e - o).abs() <= self.tolerance,
            _ => self.expected == self.observed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub scenario: String,
    pub seed: u64,
    pub trace_digest: String,
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl ScenarioPackage {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn run(&self, options: &EngineOptions) -> Result<RunResult, ScenarioError> {
        Ok(run_once(&self.spec, self.seed, options)?)
    }

    /// Runs the pinned seed and compares it with the oracle and golden digest.
    pub fn verify(&self, options: &EngineOptions) -> Result<OracleReport, ScenarioError> {
        let run = self.run(options)?;
        let digest = run.trace.digest()?.to_string();
        let mut checks = vec![Check::exact("trace_digest", self.golden_digest, digest.clone())];
        checks.extend((self.verifier)(self, &run, options)?);
        Ok(OracleReport {
            scenario: self.spec.name.clone(),
            seed: self.seed,
            trace_digest: digest,
            checks,
        })
    }

    /// The scenario as a standalone TOML document.
    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(&self.spec).map_err(|e| ScenarioError::Emit(e.to_string()))
    }
}

pub fn load_scenario(name: &str) -> Result<ScenarioPackage, ScenarioError> {
    let pkg = match name {
        "supply-chain-cascade" => cascade::package(),
        "power-grid-ambiguity" => ambiguity::package(),
        "fraud-monoculture" => monoculture::package(),
        "strategist-conformity" => conformity::package(),
        "retail-tom" => tom::package(),
        "inventory-cashflow" => mixed::package(),
        _ => return Err(ScenarioError::Unknown(name.to_string())),
    };
    Ok(pkg)
}

pub fn all() -> Vec<ScenarioPackage> {
    NAMES.iter().map(|n| load_scenario(n).expect("registered name")).collect()
}

/// Parses a scenario literal. Packages are written as JSON so they read like
/// the config files users fork from them.
fn from_json(v: Value) -> ScenarioSpec {
    let mut spec: ScenarioSpec = serde_json::from_value(v).expect("built-in scenario is well formed");
    spec.normalize();
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ScenarioSpec, Severity};

    #[test]
    fn packages_validate_cleanly() {
        for p in all() {
            let errors: Vec<_> = validate(&p.spec).into_iter().filter(|v| v.severity == Severity::Error).collect();
            assert!(errors.is_empty(), "{}: {errors:?}", p.name());
        }
    }

    #[test]
    fn oracles_hold() {
        let mut bad = Vec::new();
        for p in all() {
            let report = p.verify(&EngineOptions::default()).unwrap();
            bad.extend(report.failures().map(|c| format!("{}: {c:?}", p.name())));
        }
        assert!(bad.is_empty(), "{bad:#?}");
    }

    #[test]
    fn toml_round_trip_keeps_digest() {
        for p in all() {
            let text = p.to_toml().unwrap();
            let mut back: ScenarioSpec = toml::from_str(&text).unwrap();
            back.normalize();
            assert_eq!(back.digest(), p.spec.digest(), "{}", p.name());
        }
    }

    #[test]
    fn ingested_trace_rebuilds_run_result() {
        let opts = EngineOptions::default();
        for p in all() {
            let run = p.run(&opts).unwrap();
            let initial = opts.environments.create(&p.spec.environment).unwrap().initial_state();
            let back = RunResult::from_trace(run.trace.clone(), initial).unwrap();
            assert_eq!(back, run, "{}", p.name());
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(load_scenario("nope"), Err(ScenarioError::Unknown(_))));
    }
}
