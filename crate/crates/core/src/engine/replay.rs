use super::sim::{run_once, Simulation};
use super::{EngineError, EngineOptions, RunResult};
use crate::model::{AgentId, ScenarioSpec, Trace};

/// Re-executes `trace` against `spec` and demands event-for-event equality.
pub fn replay(trace: &Trace, spec: &ScenarioSpec, options: &EngineOptions) -> Result<RunResult, EngineError> {
    let mut spec = spec.clone();
    spec.normalize();
    let expected = spec.digest();
    if trace.header.scenario_digest != expected {
        return Err(EngineError::DigestMismatch {
            expected,
            found: trace.header.scenario_digest.clone(),
        });
    }
    let fresh = run_once(&spec, trace.seed(), options)?;
    let ours = &fresh.trace.events;
    let theirs = &trace.events;
    if let Some(index) = ours.iter().zip(theirs).position(|(a, b)| a != b) {
        return Err(EngineError::Divergence { index });
    }
    if ours.len() != theirs.len() {
        return Err(EngineError::Divergence {
            index: ours.len().min(theirs.len()),
        });
    }
    Ok(fresh)
}

/// Re-runs `spec` on `seed` for `step` steps, then asks `agent` a question
/// out of band. The main trace is never touched.
pub fn probe_agent(
    spec: &ScenarioSpec,
    seed: u64,
    step: u32,
    agent: &AgentId,
    question: &str,
    options: &EngineOptions,
) -> Result<String, EngineError> {
    if step > spec.horizon {
        return Err(EngineError::StepBeyondEnd { step, end: spec.horizon });
    }
    let mut sim = Simulation::new(spec, seed, options)?;
    while sim.current_step() < step {
        if !sim.step()? && sim.current_step() < step {
            return Err(EngineError::StepBeyondEnd {
                step,
                end: sim.current_step(),
            });
        }
    }
    sim.probe(agent, question)
}
