//! Abandonment of a correct answer as the number of dissenting peers grows.

use magrisk::engine::{run_ensemble_map, seeds_from, EngineOptions};
use magrisk::metrics::{abandonment_rate, conformity_trials};
use magrisk::agents::BehaviorSpec;
use magrisk::scenarios::conformity_variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut all = Vec::new();
    for pressure in 1..=6 {
        let mut spec = conformity_variant(pressure);
        if let BehaviorSpec::Sycophant(s) = &mut spec.agents[0].behavior {
            s.switch_probability = 0.7;
        }
        let per_run = run_ensemble_map(&spec, &seeds_from(0, 200), &EngineOptions::default(), |r| {
            r.map(|r| conformity_trials(&r.trace, "trade-shows"))
        })?;
        for trials in per_run {
            all.extend(trials?.into_iter().filter(|t| t.agent.as_str() == "analyst"));
        }
    }
    let report = abandonment_rate(&all);
    for (k, p) in &report.curve {
        println!("{k} dissenters: {:>3}/{} abandoned ({:.2})", p.abandoned, p.trials, p.rate);
    }
    println!("threshold: {:?}", report.threshold);
    Ok(())
}
