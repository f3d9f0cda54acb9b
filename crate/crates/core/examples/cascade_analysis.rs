//! Follow one corrupted forecast through a task force.

use magrisk::engine::EngineOptions;
use magrisk::metrics::{cascade_stats, taint_labels};
use magrisk::model::EventPayload;
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pkg = load_scenario("supply-chain-cascade")?;
    let run = pkg.run(&EngineOptions::default())?;

    for e in &run.trace.events {
        if let EventPayload::Contaminated { agent, label, source, via } = &e.payload {
            let from = source.as_ref().map_or("origin".to_string(), |s| s.to_string());
            println!("t={} {agent} picks up {label} from {from} via {via}", e.step);
        }
    }
    let label = taint_labels(&run.trace).into_iter().next().ok_or("no taint")?;
    let s = cascade_stats(&run.trace, &label, &pkg.spec.metrics.cost_model)?;
    println!(
        "\n{}: reached {} agents, chain depth {}, {} tainted actions, cost {}",
        s.label, s.agents_reached, s.max_chain_depth, s.tainted_actions, s.amplification
    );

    let clean = magrisk::engine::run_once(&pkg.spec.without_injections(), pkg.seed, &EngineOptions::default())?;
    println!("without the injection: {}", clean.status.as_str());
    Ok(())
}
