//! Run a built-in scenario once and print its trace summary.
//!
//! `cargo run --example run_scenario -- supply-chain-cascade 11`

use magrisk::engine::EngineOptions;
use magrisk::model::EventPayload;
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "supply-chain-cascade".into());
    let pkg = load_scenario(&name)?;
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(pkg.seed);

    println!("{}\n", pkg.narrative);
    let run = magrisk::engine::run_once(&pkg.spec, seed, &EngineOptions::default())?;
    for e in &run.trace.events {
        match &e.payload {
            EventPayload::MessageSent { message } => {
                let to: Vec<_> = message.to.iter().map(|a| a.as_str()).collect();
                println!("t={} {} -> {}: {}", e.step, message.from, to.join(","), message.content);
            }
            EventPayload::ActionTaken { agent, action, .. } => println!("t={} {agent} acts {}", e.step, action.label),
            EventPayload::MilestoneReached { name, kind } => println!("t={} milestone {name} ({kind:?})", e.step),
            _ => {}
        }
    }
    println!("\nstatus {} after {} steps, digest {}", run.status.as_str(), run.steps_executed, run.trace.digest()?);
    Ok(())
}
