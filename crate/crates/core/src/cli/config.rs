use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::inject::{PerturbationSpec, SweepAxis};
use crate::metrics::METRIC_GROUPS;
use crate::model::{canonical_json, sha256_hex, ScenarioSpec};
use crate::scenarios::load_scenario;

pub const CONFIG_SCHEMA: &str = "magrisk/1";

/// Where in the analysis pipeline the experiment sits. Recorded in reports;
/// nothing is gated on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Simulation,
    Sandbox,
    /// Ingest-only: traces come from a real pilot deployment.
    Pilot,
    /// Ingest-only: traces come from production monitoring.
    Deployment,
}

impl Stage {
    pub fn ingest_only(self) -> bool {
        matches!(self, Stage::Pilot | Stage::Deployment)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Simulation => "simulation",
            Stage::Sandbox => "sandbox",
            Stage::Pilot => "pilot",
            Stage::Deployment => "deployment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Rules,
    /// Endpoint and key come from the environment only.
    External,
}

fn default_timeout() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    #[serde(default)]
    pub kind: JudgeKind,
    /// TOML rule set replacing the built-in lexicon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_file: Option<PathBuf>,
    #[serde(default)]
    pub resolution_rules: bool,
    /// Label cache for the external judge, read before and written after a run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            kind: JudgeKind::Rules,
            rules_file: None,
            resolution_rules: false,
            cache: None,
            timeout_ms: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `drop_channel_duration`, `corrupt_probability` or `deadline`.
    pub axis: String,
    /// Injection label the axis acts on.
    pub label: String,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn axis(&self) -> Result<SweepAxis, CliError> {
        let label = self.label.clone();
        Ok(match self.axis.as_str() {
            "drop_channel_duration" => SweepAxis::DropChannelDuration { label },
            "corrupt_probability" => SweepAxis::CorruptProbability { label },
            "deadline" => SweepAxis::Deadline { label },
            other => return Err(CliError::Invalid(format!("unknown sweep axis `{other}`"))),
        })
    }
}

fn default_runs() -> usize {
    100
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment: what to run, how often, and where results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    /// Built-in scenario name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Scenario TOML file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(default)]
    pub stage: Stage,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Metric groups to report; empty keeps the scenario's own selection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
    /// Trace files to analyse instead of executing (pilot and deployment stages).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ingest: Vec<PathBuf>,
    #[serde(default)]
    pub judge: JudgeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Added to the scenario's own injections.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub injections: Vec<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_spec: Option<ScenarioSpec>,
}

/// 1-based line and column of byte `offset` in `text`.
pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn toml_error(path: &Path, text: &str, e: toml::de::Error) -> CliError {
    let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
    CliError::Parse {
        path: path.display().to_string(),
        line,
        column,
        message: e.message().to_string(),
    }
}

impl ExperimentConfig {
    pub fn for_scenario(name: &str) -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            scenario: Some(name.into()),
            scenario_file: None,
            stage: Stage::Simulation,
            runs: default_runs(),
            seed_base: 0,
            out: default_out(),
            metrics: Vec::new(),
            ingest: Vec::new(),
            judge: JudgeConfig::default(),
            sweep: None,
            injections: Vec::new(),
            scenario_spec: None,
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(CliError::Schema {
                found: cfg.schema,
                expected: CONFIG_SCHEMA,
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("serialising config: {e}")))
    }

    /// Identity of the experiment. Seed selection and output location are
    /// left out: they choose which traces to produce and where, not what a
    /// given trace contains.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.runs = 0;
        c.seed_base = 0;
        c.out = PathBuf::new();
        sha256_hex(canonical_json(&c).expect("config serialises").as_bytes())
    }

    /// The scenario with config-level injections and metric selection applied.
    pub fn resolve(&self, base_dir: &Path) -> Result<ScenarioSpec, CliError> {
        let sources = [self.scenario.is_some(), self.scenario_file.is_some(), self.scenario_spec.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(CliError::Invalid(
                "exactly one of `scenario`, `scenario_file` or `scenario_spec` must be given".into(),
            ));
        }
        let mut spec = if let Some(name) = &self.scenario {
            load_scenario(name).map_err(|e| CliError::Invalid(e.to_string()))?.spec
        } else if let Some(file) = &self.scenario_file {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| toml_error(&path, &text, e))?
        } else {
            self.scenario_spec.clone().expect("checked above")
        };
        spec.injections.extend(self.injections.iter().cloned());
        if !self.metrics.is_empty() {
            if let Some(bad) = self.metrics.iter().find(|m| !METRIC_GROUPS.contains(&m.as_str())) {
                return Err(CliError::Invalid(format!(
                    "unknown metric group `{bad}`; known: {}",
                    METRIC_GROUPS.join(", ")
                )));
            }
            spec.metrics.requested = self.metrics.clone();
        }
        match (self.stage.ingest_only(), self.ingest.is_empty()) {
            (true, true) => {
                return Err(CliError::Invalid(format!(
                    "stage `{}` only analyses recorded traces; list them under `ingest`",
                    self.stage.as_str()
                )))
            }
            (false, false) => {
                return Err(CliError::Invalid(format!(
                    "`ingest` is only meaningful for pilot and deployment stages, not `{}`",
                    self.stage.as_str()
                )))
            }
            _ => {}
        }
        spec.normalize();
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::parse("schema = \"magrisk/1\"\nscenario = \"fraud-monoculture\"\n", Path::new("c.toml")).unwrap();
        assert_eq!(c.runs, 100);
        assert_eq!(c.stage, Stage::Simulation);
        assert_eq!(c.resolve(Path::new(".")).unwrap().name, "fraud-monoculture");
    }

    #[test]
    fn parse_error_has_position() {
        let err = ExperimentConfig::parse("schema = \"magrisk/1\"\nruns = \n", Path::new("c.toml")).unwrap_err();
        match err {
            CliError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn secrets_are_not_config() {
        let text = "schema = \"magrisk/1\"\nscenario = \"x\"\n[judge]\nkind = \"external\"\nendpoint = \"http://x\"\n";
        assert!(matches!(ExperimentConfig::parse(text, Path::new("c.toml")), Err(CliError::Parse { line: 5, .. })));
    }

    #[test]
    fn wrong_schema() {
        assert!(matches!(ExperimentConfig::parse("schema = \"magrisk/0\"\n", Path::new("c")), Err(CliError::Schema { .. })));
    }

    #[test]
    fn digest_ignores_seed_selection() {
        let a = ExperimentConfig::for_scenario("retail-tom");
        let mut b = a.clone();
        b.runs = 7;
        b.seed_base = 99;
        b.out = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.metrics = vec!["tom".into()];
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn ingest_stages() {
        let mut c = ExperimentConfig::for_scenario("retail-tom");
        c.stage = Stage::Pilot;
        assert!(matches!(c.resolve(Path::new(".")), Err(CliError::Invalid(_))));
        c.ingest = vec!["t.jsonl".into()];
        assert!(c.resolve(Path::new(".")).is_ok());
        c.stage = Stage::Sandbox;
        assert!(matches!(c.resolve(Path::new(".")), Err(CliError::Invalid(_))));
    }

    #[test]
    fn emitted_config_round_trips() {
        let mut c = ExperimentConfig::for_scenario("inventory-cashflow");
        c.scenario_spec = Some(load_scenario("inventory-cashflow").unwrap().spec);
        c.scenario = None;
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::parse(&text, Path::new("c")).unwrap();
        assert_eq!(back.digest(), c.digest());
    }
}
