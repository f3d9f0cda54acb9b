//! Failure rate over an ensemble, its Wilson interval, and the deployment
//! estimate after a safety factor.

use magrisk::engine::{run_ensemble, seeds_from, EngineOptions};
use magrisk::metrics::safety_estimate;
use magrisk::model::ScenarioSpec;
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // No injected misread; instead the forecaster reads the chart wrong 5% of the time.
    let spec = load_scenario("supply-chain-cascade")?.spec.without_injections();
    let mut v = serde_json::to_value(&spec)?;
    v["agents"][0]["behavior"]["capabilities"]["tags"]["chart_read"] = 0.95.into();
    let spec: ScenarioSpec = serde_json::from_value(v)?;

    for n in [20, 100, 1000] {
        let ens = run_ensemble(&spec, &seeds_from(0, n), &EngineOptions::default())?;
        let est = safety_estimate(&ens, 3.0)?;
        println!(
            "N={n:>4}  failures {:.3}  95% CI [{:.3}, {:.3}]  x{} -> {:.3} (upper {:.3})",
            est.failure_rate, est.wilson.0, est.wilson.1, est.factor, est.deployment_rate, est.deployment_upper
        );
    }
    Ok(())
}
