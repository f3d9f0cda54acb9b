//! Response diversity of five identical analysts, then of a mixed team.

use magrisk::engine::EngineOptions;
use magrisk::metrics::{pairwise_similarity, response_entropy, HashingEmbedder, ResponseSet};
use magrisk::scenarios::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pkg = load_scenario("fraud-monoculture")?;
    let run = pkg.run(&EngineOptions::default())?;
    let embedder = HashingEmbedder::default();
    let rs = ResponseSet::final_messages(&run.trace, &embedder);
    for it in &rs.items {
        println!("{}: {}", it.agent, it.content);
    }
    let sim = pairwise_similarity(&rs)?;
    let threshold = pkg.spec.metrics.entropy_threshold;
    println!("mean similarity {:.3}, entropy {:.3} bits", sim.mean_off_diagonal, response_entropy(&rs, threshold)?);

    let mixed = ResponseSet::embed(
        &embedder,
        [
            ("rules".into(), "Known fraud signature matched; escalate."),
            ("graph".into(), "Mule account ring detected through layered wires."),
            ("anomaly".into(), "Transfer velocity is far outside the customer's history."),
        ],
    );
    println!("mixed team: mean similarity {:.3}, entropy {:.3} bits", pairwise_similarity(&mixed)?.mean_off_diagonal, response_entropy(&mixed, threshold)?);
    Ok(())
}
