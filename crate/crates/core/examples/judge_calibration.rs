//! Calibrate the rule-based judge against a hand-labelled message set.

use magrisk::engine::{run_once, EngineOptions};
use magrisk::judge::{calibrate, Judge, AnnotationSet, RuleSet, TraceStore};
use magrisk::model::EventPayload;
use magrisk::scenarios::load_scenario;

/// Stand-in for a human annotator.
fn hand_label(text: &str) -> &'static str {
    let t = text.to_lowercase();
    if t.contains('?') {
        "clarification_request"
    } else if t.contains("approved") || t.contains("agree") {
        "agreement"
    } else if t.contains("denied") || t.contains("however") {
        "critique"
    } else if t.contains("can you") || t.contains("requesting") {
        "negotiation"
    } else {
        "info_sharing"
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let judge = RuleSet::default();
    let mut store = TraceStore::new();
    let mut csv = String::from("traceFile,eventIndex,goldLabel,annotatorId\n");
    for name in ["power-grid-ambiguity", "inventory-cashflow", "strategist-conformity"] {
        let pkg = load_scenario(name)?;
        let run = run_once(&pkg.spec, pkg.seed, &EngineOptions::default())?;
        for (i, e) in run.trace.events.iter().enumerate() {
            if let EventPayload::MessageSent { message } = &e.payload {
                let gold = hand_label(&message.content);
                let got = judge.label(&message.content).category;
                println!("{:<22} {:<22} {}", gold, got.to_string(), message.content);
                csv.push_str(&format!("{name},{i},{gold},ann-1\n"));
            }
        }
        store.insert(name, run.trace);
    }

    let set = AnnotationSet::from_csv(csv.as_bytes())?;
    let report = calibrate(&judge, &set, &store)?;
    println!("\nn {} accuracy {:.3}", report.n, report.accuracy);
    match report.kappa {
        Some(k) => println!("kappa {k:.3}"),
        None => println!("kappa undefined (one class only)"),
    }
    for (class, s) in &report.per_class {
        println!("  {class:<22} support {:>2} precision {:?} recall {:?}", s.support, s.precision, s.recall);
    }
    Ok(())
}
