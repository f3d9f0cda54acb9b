//! Score each agent's predictions about its peers, then probe one agent.

use magrisk::engine::{probe_agent, EngineOptions};
use magrisk::metrics::{resolve_predictions, tom_score};
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pkg = load_scenario("retail-tom")?;
    let opts = EngineOptions::default();
    let run = pkg.run(&opts)?;

    for p in resolve_predictions(&run.trace) {
        println!("{} expected {} to {}; it did {}", p.agent, p.target, p.predicted, p.actual.as_deref().unwrap_or("nothing"));
    }
    for (agent, s) in tom_score(&run.trace).per_agent {
        println!("{agent}: accuracy {:?}, brier {:?}", s.accuracy, s.brier);
    }

    let question = "What do you expect pricing to do this season?";
    let answer = probe_agent(&pkg.spec, pkg.seed, 1, &"inventory".into(), question, &opts)?;
    println!("\nprobe inventory at t=1: {answer}");
    Ok(())
}
