use rayon::prelude::*;

use super::sim::run_once;
use super::{EngineError, EngineOptions, RunResult};
use crate::model::{validate, ScenarioSpec, Severity};

/// Two-sided 95% normal quantile.
pub const WILSON_Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` failures out of `n` runs.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `n` consecutive seeds starting at `base`.
pub fn seeds_from(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub failures: usize,
    pub n: usize,
    /// `failures / n`.
    pub failure_rate: f64,
    pub wilson: (f64, f64),
}

impl EnsembleResult {
    pub fn from_runs(seeds: Vec<u64>, runs: Vec<RunResult>) -> Self {
        let failures = runs.iter().filter(|r| r.is_failure()).count();
        let n = runs.len();
        EnsembleResult {
            seeds,
            failures,
            n,
            failure_rate: if n == 0 { 0.0 } else { failures as f64 / n as f64 },
            wilson: wilson_interval(failures, n, WILSON_Z95),
            runs,
        }
    }

    pub fn success_rate(&self) -> f64 {
        1.0 - self.failure_rate
    }
}

fn check(spec: &ScenarioSpec) -> Result<(), EngineError> {
    let errors: Vec<_> = validate(spec)
        .into_iter()
        .filter(|v| v.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(EngineError::Invalid(errors))
    }
}

/// Runs every seed and maps each result through `f`, in seed order.
/// Runs execute in parallel; per-run engine errors become `Err` items rather
/// than aborting the batch.
pub fn run_ensemble_map<T, F>(spec: &ScenarioSpec, seeds: &[u64], options: &EngineOptions, f: F) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(Result<RunResult, EngineError>) -> T + Sync + Send,
{
    check(spec)?;
    let work = || seeds.par_iter().map(|&s| f(run_once(spec, s, options))).collect::<Vec<T>>();
    Ok(match options.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map(|pool| pool.install(work))
            .unwrap_or_else(|_| work()),
        None => work(),
    })
}

/// Independent repetitions of `spec`, one per seed.
pub fn run_ensemble(spec: &ScenarioSpec, seeds: &[u64], options: &EngineOptions) -> Result<EnsembleResult, EngineError> {
    let results = run_ensemble_map(spec, seeds, options, |r| r)?;
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleResult::from_runs(seeds.to_vec(), runs))
}
