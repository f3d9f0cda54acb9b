//! Write a trace to disk, read it back, and re-execute it.

use magrisk::engine::{replay, run_once, EngineOptions, EnvironmentRegistry, RunResult};
use magrisk::model::Trace;
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pkg = load_scenario("inventory-cashflow")?;
    let opts = EngineOptions::default();
    let run = run_once(&pkg.spec, 42, &opts)?;

    let path = std::env::temp_dir().join("magrisk-replay-audit.jsonl");
    std::fs::write(&path, run.trace.to_jsonl())?;
    let trace = Trace::from_jsonl(&std::fs::read_to_string(&path)?)?;
    println!("{}: {} events, digest {}", path.display(), trace.events.len(), trace.digest()?);

    let again = replay(&trace, &pkg.spec, &opts)?;
    println!("replayed digest       {}", again.trace.digest()?);

    // Metrics can be rebuilt without re-running anything.
    let initial = EnvironmentRegistry::default().create(&pkg.spec.environment)?.initial_state();
    let ingested = RunResult::from_trace(trace, initial)?;
    println!("ingested status {}, outcome {}", ingested.status.as_str(), ingested.final_state["outcome"]);
    Ok(())
}
