//! Sweep a channel outage over its duration and watch the success rate.

use magrisk::engine::EngineOptions;
use magrisk::inject::{sweep, PerturbationAction, PerturbationSpec, SweepAxis};
use magrisk::metrics::PlotTable;
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = load_scenario("power-grid-ambiguity")?.spec;
    spec.injections.push(PerturbationSpec::at_step(
        "outage",
        0,
        PerturbationAction::DropChannel { from: "grid".into(), to: "comms".into(), duration: 1 },
    ));
    let axis = SweepAxis::DropChannelDuration { label: "outage".into() };
    let points = sweep(&spec, &axis, &[0.0, 1.0, 2.0, 3.0, 4.0], 50, 0, &EngineOptions::default())?;
    for p in &points {
        println!("outage {} steps: success {:.2}", p.value, p.ensemble.success_rate());
    }
    PlotTable::sweep(axis.name(), &points).write_csv(std::io::stdout())?;
    Ok(())
}
