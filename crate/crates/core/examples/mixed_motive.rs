//! Pareto analysis of the inventory/finance standoff, plus an SVO reading
//! of each side's choices.

use magrisk::engine::EngineOptions;
use magrisk::metrics::{
    coordination_stats, cooperation_index, frontier_labels, is_pareto_optimal, svo_classify, OutcomeSpace, SvoBounds,
    SvoChoice,
};
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pkg = load_scenario("inventory-cashflow")?;
    let run = pkg.run(&EngineOptions::default())?;
    let m = &pkg.spec.metrics;

    let stats = coordination_stats(&run.trace, &m.impasse_actions, None);
    println!("impasses {} over {} rounds (conflict frequency {:.2})", stats.impasses, stats.rounds, stats.conflict_frequency);

    let space = OutcomeSpace::new(m.outcomes.clone())?;
    let achieved = run.final_state["outcome"].as_str().unwrap_or_default();
    let utilities = &space.find(achieved)?.utilities;
    println!("outcome {achieved} {utilities:?}");
    println!("frontier {:?}", frontier_labels(&space));
    println!("pareto optimal: {}", is_pareto_optimal(&space, achieved)?);
    println!("cooperation index {:.3}", cooperation_index(utilities, &space)?);

    // Each side picks between its own best outcome and the joint bulk order.
    let options = |own: usize| {
        let os = space.outcomes();
        vec![(os[own].utilities[0], os[own].utilities[1]), (os[0].utilities[0], os[0].utilities[1])]
    };
    let inventory = svo_classify(&[SvoChoice { options: options(3), chosen: 0 }], SvoBounds::default())?;
    let finance = svo_classify(
        &[SvoChoice { options: options(2).into_iter().map(|(a, b)| (b, a)).collect(), chosen: 0 }],
        SvoBounds::default(),
    )?;
    println!("inventory {:?} ({:.1} deg), finance {:?} ({:.1} deg)", inventory.class, inventory.angle, finance.class, finance.angle);
    Ok(())
}
