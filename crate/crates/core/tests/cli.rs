use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use magrisk::engine::{run_once, wilson_interval, EngineOptions};
use magrisk::judge::{Judge, RuleSet};
use magrisk::model::EventPayload;
use magrisk::scenarios::load_scenario;

fn magrisk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magrisk")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn emit(dir: &Path, name: &str) -> String {
    let o = magrisk(dir, &["scenarios", "emit", name]);
    assert_eq!(o.status.code(), Some(0));
    let file = format!("{name}.toml");
    fs::write(dir.join(&file), &o.stdout).unwrap();
    file
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn section_mean(r: &serde_json::Value, metric: &str) -> Option<f64> {
    r["sections"].as_array()?.iter().find_map(|s| s["means"][metric].as_f64())
}

#[test]
fn monoculture_run_reports_zero_entropy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = emit(tmp.path(), "fraud-monoculture");
    let o = magrisk(tmp.path(), &["run", "--config", &cfg, "--runs", "10", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&tmp.path().join("out"));
    assert_eq!(section_mean(&r, "entropy_bits"), Some(0.0));
    assert_eq!(section_mean(&r, "similarity_mean"), Some(1.0));
    // Salient modes come first.
    assert_eq!(r["sections"][0]["exposure"], "high");
}

#[test]
fn malformed_config_exits_2_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "schema = \"magrisk/1\"\nscenario = \"retail-tom\"\nruns = [1,\n").unwrap();
    let o = magrisk(tmp.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml:3:"));
}

#[test]
fn invalid_scenario_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "schema = \"magrisk/1\"\nscenario = \"retail-tom\"\nscenario_file = \"x.toml\"\n").unwrap();
    assert_eq!(magrisk(tmp.path(), &["run", "--config", "c.toml"]).status.code(), Some(3));
}

#[test]
fn run_then_replay_has_no_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = emit(tmp.path(), "supply-chain-cascade");
    assert_eq!(magrisk(tmp.path(), &["run", "--config", &cfg, "--runs", "4", "--seed-base", "40"]).status.code(), Some(0));
    let o = magrisk(tmp.path(), &["replay", "--config", &cfg, "--trace", "out/traces/seed-42.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 divergences"));

    // The same trace against another experiment is refused.
    let other = emit(tmp.path(), "retail-tom");
    let o = magrisk(tmp.path(), &["replay", "--config", &other, "--trace", "out/traces/seed-42.jsonl"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("digest mismatch"));
}

#[test]
fn artifacts_are_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = emit(tmp.path(), "strategist-conformity");
    for out in ["a", "b"] {
        assert_eq!(magrisk(tmp.path(), &["run", "--config", &cfg, "--runs", "8", "--out", out, "--jobs", "2"]).status.code(), Some(0));
    }
    for f in ["report.json", "runs.csv", "traces/seed-3.jsonl"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
    let trace = fs::read_to_string(tmp.path().join("a/traces/seed-3.jsonl")).unwrap();
    assert!(trace.lines().next().unwrap().contains("config_digest"));
}

#[test]
fn sweep_over_drop_duration_gives_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("s.toml"),
        r#"schema = "magrisk/1"
scenario = "power-grid-ambiguity"
runs = 3

[[injections]]
label = "cut"
trigger = { at_step = 0 }
action = { type = "drop_channel", from = "grid", to = "comms", duration = 1 }
"#,
    )
    .unwrap();
    let o = magrisk(
        tmp.path(),
        &["sweep", "--config", "s.toml", "--axis", "drop_channel_duration", "--label", "cut", "--values", "0,1,2,3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(tmp.path().join("out/sweep.csv")).unwrap();
    assert_eq!(rdr.records().count(), 4);
}

/// Textbook Wilson score interval, written out independently of the engine.
fn wilson_by_hand(k: f64, n: f64) -> (f64, f64) {
    let z = 1.959963984540054;
    let p = k / n;
    let centre = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    let half = z / (1.0 + z * z / n) * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[test]
fn report_over_hundred_runs_carries_wilson_interval() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("c.toml"),
        r#"schema = "magrisk/1"
scenario = "supply-chain-cascade"
runs = 100

[[injections]]
label = "flaky-forecast"
trigger = { at_step = 0 }
action = { type = "corrupt_message", from = "forecaster", find = "next quarter", replace = "next quarter (unverified)", probability = 0.5 }
"#,
    )
    .unwrap();
    assert_eq!(magrisk(tmp.path(), &["run", "--config", "c.toml"]).status.code(), Some(0));
    let o = magrisk(tmp.path(), &["report", "--config", "c.toml", "--traces", "out/traces", "--out", "rep"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&tmp.path().join("rep"));
    assert_eq!(r["runs"], 100);
    let (k, n) = (r["failures"].as_f64().unwrap(), 100.0);
    assert_eq!(r["failure_rate"].as_f64().unwrap(), k / n);
    let (lo, hi) = wilson_by_hand(k, n);
    assert!((r["wilson"][0].as_f64().unwrap() - lo).abs() < 1e-9);
    assert!((r["wilson"][1].as_f64().unwrap() - hi).abs() < 1e-9);
    assert!((wilson_interval(k as usize, 100, 1.959963984540054).1 - hi).abs() < 1e-12);
    assert!(stdout(&o).contains("failure rate"));
}

#[test]
fn calibrate_judge_with_self_labels_prints_kappa_one() {
    let tmp = tempfile::tempdir().unwrap();
    let judge = RuleSet::default();
    let mut csv = String::from("traceFile,eventIndex,goldLabel,annotatorId\n");
    for (name, file) in [("inventory-cashflow", "a.jsonl"), ("power-grid-ambiguity", "b.jsonl")] {
        let p = load_scenario(name).unwrap();
        let run = run_once(&p.spec, p.seed, &EngineOptions::default()).unwrap();
        fs::write(tmp.path().join(file), run.trace.to_jsonl()).unwrap();
        for (i, e) in run.trace.events.iter().enumerate() {
            if let EventPayload::MessageSent { message } = &e.payload {
                csv.push_str(&format!("{file},{i},{},ann-1\n", judge.label(&message.content).category));
            }
        }
    }
    fs::write(tmp.path().join("gold.csv"), csv).unwrap();
    let o = magrisk(tmp.path(), &["calibrate-judge", "--annotations", "gold.csv", "--out", "cal"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("accuracy 1.0000") && text.contains("kappa 1.0000"), "{text}");
    assert!(tmp.path().join("cal/calibration.json").exists());
}

#[test]
fn pilot_stage_only_ingests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = emit(tmp.path(), "retail-tom");
    assert_eq!(magrisk(tmp.path(), &["run", "--config", &cfg, "--runs", "2"]).status.code(), Some(0));
    let text = fs::read_to_string(tmp.path().join(&cfg)).unwrap();
    let pilot = text.replace("stage = \"simulation\"", "stage = \"pilot\"\ningest = [\"out/traces\"]");
    fs::write(tmp.path().join("pilot.toml"), &pilot).unwrap();
    let o = magrisk(tmp.path(), &["run", "--config", "pilot.toml", "--out", "pilot-out"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&tmp.path().join("pilot-out"));
    assert_eq!(r["stage"], "pilot");
    assert!(r["notes"]["source"].as_str().unwrap().contains("not executed"));
    assert!(!tmp.path().join("pilot-out/traces").exists());

    let no_ingest = text.replace("stage = \"simulation\"", "stage = \"deployment\"");
    fs::write(tmp.path().join("dep.toml"), no_ingest).unwrap();
    assert_eq!(magrisk(tmp.path(), &["run", "--config", "dep.toml"]).status.code(), Some(3));
}

#[test]
fn probe_answers_without_touching_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = emit(tmp.path(), "retail-tom");
    let o = magrisk(tmp.path(), &["probe", "--config", &cfg, "--seed", "13", "--step", "1", "--agent", "inventory", "--question", "What will pricing do?"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("reduce_prices"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn scenario_verification_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = magrisk(tmp.path(), &["scenarios", "verify"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("PASS").count(), 6);
}
