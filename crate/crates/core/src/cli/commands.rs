use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, JudgeConfig, JudgeKind};
use super::{runtime, CliError, Command, RunFlags, ScenarioCommand};
use crate::engine::{
    probe_agent, replay, run_ensemble, seeds_from, EngineError, EngineOptions, EnsembleResult, RunResult,
};
use crate::inject::{sweep, SweepError};
use crate::judge::{calibrate, AnnotationSet, ExternalJudge, Judge, RuleSet, TraceStore};
use crate::metrics::{analyze_run, MetricReport, PlotTable, RunMetrics};
use crate::model::{validate, AgentId, ScenarioSpec, Severity, Trace};
use crate::scenarios::{all, load_scenario};

/// Text for stdout plus the exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, code: 0 }
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    spec: ScenarioSpec,
    digest: String,
    base: PathBuf,
}

fn load(path: &Path, flags: Option<&RunFlags>) -> Result<Loaded, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(f) = flags {
        if let Some(s) = f.seed_base {
            cfg.seed_base = s;
        }
        if let Some(n) = f.runs {
            cfg.runs = n;
        }
        if let Some(o) = &f.out {
            cfg.out = o.clone();
        }
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let spec = cfg.resolve(&base)?;
    let errors: Vec<String> = validate(&spec)
        .into_iter()
        .filter(|v| v.severity == Severity::Error)
        .map(|v| format!("{}: {}", v.path, v.message))
        .collect();
    if !errors.is_empty() {
        return Err(CliError::Invalid(errors.join("; ")));
    }
    let digest = cfg.digest();
    Ok(Loaded { cfg, spec, digest, base })
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Invalid(v) => CliError::Invalid(v.iter().map(|x| format!("{}: {}", x.path, x.message)).collect::<Vec<_>>().join("; ")),
        other => runtime(other),
    }
}

fn options(jobs: Option<usize>) -> EngineOptions {
    EngineOptions {
        jobs,
        ..Default::default()
    }
}

enum JudgeHandle {
    Rules(RuleSet),
    External(ExternalJudge, Option<PathBuf>),
}

impl JudgeHandle {
    fn build(cfg: &JudgeConfig, base: &Path) -> Result<Self, CliError> {
        match cfg.kind {
            JudgeKind::Rules => {
                let mut rules = match &cfg.rules_file {
                    Some(f) => {
                        let path = base.join(f);
                        let text = fs::read_to_string(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                        RuleSet::from_toml(&text).map_err(|e| CliError::Invalid(e.to_string()))?
                    }
                    None => RuleSet::default(),
                };
                if cfg.resolution_rules {
                    rules = rules.with_resolution_rules();
                }
                Ok(JudgeHandle::Rules(rules))
            }
            JudgeKind::External => {
                let judge = ExternalJudge::from_env()
                    .ok_or_else(|| runtime(format!("external judge selected but {} is not set", crate::judge::ENDPOINT_VAR)))?
                    .with_timeout(cfg.timeout_ms);
                let cache = cfg.cache.as_ref().map(|c| base.join(c));
                if let Some(c) = cache.as_ref().filter(|c| c.exists()) {
                    judge.load_cache(c).map_err(runtime)?;
                }
                Ok(JudgeHandle::External(judge, cache))
            }
        }
    }

    fn judge(&self) -> &dyn Judge {
        match self {
            JudgeHandle::Rules(r) => r,
            JudgeHandle::External(j, _) => j,
        }
    }

    fn finish(&self) -> Result<(), CliError> {
        if let JudgeHandle::External(j, Some(path)) = self {
            j.save_cache(path).map_err(runtime)?;
        }
        Ok(())
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(runtime)?;
    text.push('\n');
    write(path, text.as_bytes())
}

/// Plot table with the producing command and config digest as leading columns.
fn write_table(path: &Path, table: &PlotTable, command: &str, digest: &str) -> Result<(), CliError> {
    let mut t = table.clone();
    t.columns.splice(0..0, ["command".to_string(), "config_digest".to_string()]);
    for r in &mut t.rows {
        r.splice(0..0, [command.to_string(), digest.to_string()]);
    }
    let mut buf = Vec::new();
    t.write_csv(&mut buf).map_err(runtime)?;
    write(path, &buf)
}

fn annotate(trace: &mut Trace, command: &str, l: &Loaded) {
    let notes = &mut trace.header.notes;
    notes.insert("command".into(), command.into());
    notes.insert("config_digest".into(), l.digest.clone());
    notes.insert("stage".into(), l.cfg.stage.as_str().into());
}

fn short(d: &str) -> &str {
    &d[..d.len().min(12)]
}

fn summary(report: &MetricReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} (stage {}, config {})",
        report.scenario,
        report.stage.as_deref().unwrap_or("-"),
        short(report.config_digest.as_deref().unwrap_or("-"))
    );
    let _ = writeln!(
        s,
        "runs {}  failures {}  failure rate {:.4}  95% CI [{:.4}, {:.4}]",
        report.runs, report.failures, report.failure_rate, report.wilson.0, report.wilson.1
    );
    if let Some(safety) = &report.safety {
        let _ = writeln!(s, "with safety factor: {safety:?}");
    }
    if !report.salient.is_empty() {
        let _ = writeln!(s, "salient: {}", report.salient.join(", "));
    }
    for sec in &report.sections {
        let tag = match sec.exposure {
            Some(crate::model::Exposure::High) => "high",
            Some(crate::model::Exposure::Exposure) => "exposed",
            None => "other",
        };
        let _ = writeln!(s, "[{tag}] {}", sec.mode);
        for (k, v) in &sec.means {
            let _ = writeln!(s, "  {k} = {v}");
        }
    }
    s
}

fn finish_report(
    command: &str,
    l: &Loaded,
    ensemble: &EnsembleResult,
    judge: &JudgeHandle,
    out: &Path,
    mut notes: Vec<(String, String)>,
) -> Result<(MetricReport, String), CliError> {
    let per_run: Vec<RunMetrics> = ensemble.runs.iter().map(|r| analyze_run(&l.spec, r, judge.judge())).collect();
    judge.finish()?;
    let mut report = MetricReport::build(&l.spec, ensemble, &per_run);
    report.config_digest = Some(l.digest.clone());
    report.stage = Some(l.cfg.stage.as_str().into());
    notes.push(("command".into(), command.into()));
    report.notes.extend(notes);
    write_json(&out.join("report.json"), &report)?;
    write_table(&out.join("runs.csv"), &PlotTable::per_run(&per_run), command, &l.digest)?;
    let text = summary(&report);
    Ok((report, text))
}

fn trace_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| runtime(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Invalid("no trace files found".into()));
    }
    Ok(out)
}

fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Trace::from_jsonl(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Metric report over recorded traces; nothing is executed.
fn ingest(command: &str, l: &Loaded, paths: &[PathBuf], out: &Path) -> Result<Outcome, CliError> {
    let initial = EngineOptions::default()
        .environments
        .create(&l.spec.environment)
        .map_err(engine_error)?
        .initial_state();
    let digest = l.spec.digest();
    let mut runs = Vec::new();
    let mut foreign = 0;
    for p in trace_files(paths)? {
        let t = read_trace(&p)?;
        if t.header.scenario_digest != digest {
            foreign += 1;
        }
        runs.push(RunResult::from_trace(t, initial.clone()).map_err(|e| runtime(format!("{}: {e}", p.display())))?);
    }
    let seeds = runs.iter().map(RunResult::seed).collect();
    let ensemble = EnsembleResult::from_runs(seeds, runs);
    let mut notes = vec![("source".to_string(), "ingested traces; not executed by this tool".to_string())];
    if foreign > 0 {
        notes.push(("scenario_digest".into(), format!("{foreign} traces were recorded under a different scenario configuration")));
    }
    let judge = JudgeHandle::build(&l.cfg.judge, &l.base)?;
    let (_, text) = finish_report(command, l, &ensemble, &judge, out, notes)?;
    Ok(Outcome::ok(text + &format!("wrote {}\n", out.join("report.json").display())))
}

fn cmd_run(flags: &RunFlags) -> Result<Outcome, CliError> {
    let l = load(&flags.config, Some(flags))?;
    let out = l.cfg.out.clone();
    if l.cfg.stage.ingest_only() {
        let paths: Vec<PathBuf> = l.cfg.ingest.iter().map(|p| l.base.join(p)).collect();
        return ingest("run", &l, &paths, &out);
    }
    let judge = JudgeHandle::build(&l.cfg.judge, &l.base)?;
    let seeds = seeds_from(l.cfg.seed_base, l.cfg.runs);
    let mut ensemble = run_ensemble(&l.spec, &seeds, &options(flags.jobs)).map_err(engine_error)?;
    for r in &mut ensemble.runs {
        annotate(&mut r.trace, "run", &l);
        write(&out.join("traces").join(format!("seed-{}.jsonl", r.seed())), r.trace.to_jsonl().as_bytes())?;
    }
    let (_, text) = finish_report("run", &l, &ensemble, &judge, &out, Vec::new())?;
    Ok(Outcome::ok(text + &format!("wrote {} traces, report.json and runs.csv to {}\n", ensemble.n, out.display())))
}

fn cmd_sweep(flags: &RunFlags, axis: &Option<String>, label: &Option<String>, values: &Option<Vec<f64>>) -> Result<Outcome, CliError> {
    let l = load(&flags.config, Some(flags))?;
    let sc = match (axis, label, values) {
        (Some(a), Some(lb), Some(v)) => super::SweepConfig {
            axis: a.clone(),
            label: lb.clone(),
            values: v.clone(),
        },
        _ => l.cfg.sweep.clone().ok_or_else(|| CliError::Invalid("no sweep given in config or flags".into()))?,
    };
    let ax = sc.axis()?;
    let points = sweep(&l.spec, &ax, &sc.values, l.cfg.runs, l.cfg.seed_base, &options(flags.jobs)).map_err(|e| match e {
        SweepError::Engine(e) => engine_error(e),
        other => CliError::Invalid(other.to_string()),
    })?;
    let table = PlotTable::sweep(ax.name(), &points);
    let path = l.cfg.out.join("sweep.csv");
    write_table(&path, &table, "sweep", &l.digest)?;
    let mut s = format!("sweep {} `{}` over {} values, {} runs each\n", ax.name(), sc.label, points.len(), l.cfg.runs);
    for p in &points {
        let _ = writeln!(
            s,
            "  {} = {}: failure rate {:.4} [{:.4}, {:.4}]",
            ax.name(),
            p.value,
            p.ensemble.failure_rate,
            p.ensemble.wilson.0,
            p.ensemble.wilson.1
        );
    }
    let _ = writeln!(s, "wrote {}", path.display());
    Ok(Outcome::ok(s))
}

#[derive(Serialize)]
struct CalibrationArtifact<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stale: Option<bool>,
    report: crate::judge::CalibrationReport,
}

fn cmd_calibrate(annotations: &Path, traces: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<Outcome, CliError> {
    let set = AnnotationSet::from_path(annotations).map_err(|e| CliError::Invalid(e.to_string()))?;
    let store = TraceStore::load_for(&set, traces).map_err(runtime)?;
    let (judge, digest, scenario_digest) = match config {
        Some(c) => {
            let l = load(c, None)?;
            (JudgeHandle::build(&l.cfg.judge, &l.base)?, Some(l.digest.clone()), Some(l.spec.digest()))
        }
        None => (JudgeHandle::Rules(RuleSet::default()), None, None),
    };
    let report = calibrate(judge.judge(), &set, &store).map_err(|e| CliError::Invalid(e.to_string()))?;
    judge.finish()?;
    let mut s = format!("messages {}  accuracy {:.4}  ", report.n, report.accuracy);
    match report.kappa {
        Some(k) => {
            let _ = writeln!(s, "kappa {k:.4}");
        }
        None => s.push_str("kappa undefined (single class)\n"),
    }
    for (class, st) in &report.per_class {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(s, "  {class}: support {} precision {} recall {}", st.support, f(st.precision), f(st.recall));
    }
    let stale = scenario_digest.as_deref().map(|d| report.is_stale_for(d));
    if stale == Some(true) {
        s.push_str("warning: annotations come from traces of a different scenario configuration\n");
    }
    if let Some(dir) = out {
        let path = dir.join("calibration.json");
        write_json(&path, &CalibrationArtifact { command: "calibrate-judge", config_digest: digest, stale, report })?;
        let _ = writeln!(s, "wrote {}", path.display());
    }
    Ok(Outcome::ok(s))
}

fn cmd_report(config: &Path, traces: &[PathBuf], out: Option<&Path>) -> Result<Outcome, CliError> {
    let l = load(config, None)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| l.cfg.out.clone());
    ingest("report", &l, traces, &out)
}

fn cmd_replay(config: &Path, trace: &Path) -> Result<Outcome, CliError> {
    let l = load(config, None)?;
    let t = read_trace(trace)?;
    match t.header.notes.get("config_digest") {
        None => return Err(runtime("trace records no config digest; cannot confirm it belongs to this config")),
        Some(d) if *d != l.digest => {
            return Err(runtime(format!("config digest mismatch: trace has {}, config is {}", short(d), short(&l.digest))))
        }
        Some(_) => {}
    }
    let fresh = replay(&t, &l.spec, &EngineOptions::default()).map_err(engine_error)?;
    let digest = t.digest().map_err(runtime)?;
    Ok(Outcome::ok(format!(
        "replay ok: seed {}, {} events, 0 divergences, status {}, trace digest {digest}\n",
        t.seed(),
        fresh.trace.events.len(),
        fresh.status
    )))
}

fn cmd_probe(config: &Path, seed: u64, step: u32, agent: &str, question: &str) -> Result<Outcome, CliError> {
    let l = load(config, None)?;
    let answer = probe_agent(&l.spec, seed, step, &AgentId::from(agent), question, &EngineOptions::default()).map_err(engine_error)?;
    Ok(Outcome::ok(format!("{answer}\n")))
}

fn cmd_scenarios(action: &ScenarioCommand) -> Result<Outcome, CliError> {
    match action {
        ScenarioCommand::List => {
            let mut s = String::new();
            for p in all() {
                let _ = writeln!(s, "{:<24} {:<28} {} agents", p.name(), p.mode.to_string(), p.spec.agents.len());
            }
            Ok(Outcome::ok(s))
        }
        ScenarioCommand::Emit { name } => {
            let p = load_scenario(name).map_err(|e| CliError::Invalid(e.to_string()))?;
            let mut cfg = ExperimentConfig::for_scenario(name);
            cfg.scenario = None;
            cfg.scenario_spec = Some(p.spec);
            let mut text = String::new();
            for line in p.narrative.split_whitespace().collect::<Vec<_>>().chunks(12) {
                let _ = writeln!(text, "# {}", line.join(" "));
            }
            text.push_str(&cfg.to_toml()?);
            Ok(Outcome::ok(text))
        }
        ScenarioCommand::Verify { name } => {
            let pkgs = match name {
                Some(n) => vec![load_scenario(n).map_err(|e| CliError::Invalid(e.to_string()))?],
                None => all(),
            };
            let mut s = String::new();
            let mut failed = false;
            for p in pkgs {
                let r = p.verify(&EngineOptions::default()).map_err(runtime)?;
                let bad: Vec<_> = r.failures().collect();
                failed |= !bad.is_empty();
                let _ = writeln!(s, "{} {} ({} checks)", if bad.is_empty() { "PASS" } else { "FAIL" }, r.scenario, r.checks.len());
                for c in bad {
                    let _ = writeln!(s, "  {}: expected {} observed {}", c.name, c.expected, c.observed);
                }
            }
            Ok(Outcome {
                stdout: s,
                code: if failed { 4 } else { 0 },
            })
        }
    }
}

/// Runs one parsed command.
pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Run(flags) => cmd_run(flags),
        Command::Sweep { flags, axis, label, values } => cmd_sweep(flags, axis, label, values),
        Command::CalibrateJudge { annotations, traces, config, out } => {
            cmd_calibrate(annotations, traces, config.as_deref(), out.as_deref())
        }
        Command::Report { config, traces, out } => cmd_report(config, traces, out.as_deref()),
        Command::Replay { config, trace } => cmd_replay(config, trace),
        Command::Probe { config, seed, step, agent, question } => cmd_probe(config, *seed, *step, agent, question),
        Command::Scenarios { action } => cmd_scenarios(action),
    }
}
