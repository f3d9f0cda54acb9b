use serde::{Deserialize, Serialize};

use super::{PerturbationAction, PerturbationSpec, Trigger};
use crate::engine::{run_ensemble, seeds_from, EngineError, EngineOptions, EnsembleResult};
use crate::model::ScenarioSpec;

/// Injection parameter varied across sweep points, keyed by injection label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Value 0 removes the injection.
    DropChannelDuration { label: String },
    CorruptProbability { label: String },
    /// Lowers the horizon from step 0; the injection is added when absent.
    Deadline { label: String },
}

impl SweepAxis {
    pub fn label(&self) -> &str {
        match self {
            SweepAxis::DropChannelDuration { label }
            | SweepAxis::CorruptProbability { label }
            | SweepAxis::Deadline { label } => label,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::DropChannelDuration { .. } => "drop_channel_duration",
            SweepAxis::CorruptProbability { .. } => "corrupt_probability",
            SweepAxis::Deadline { .. } => "deadline",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub ensemble: EnsembleResult,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("no injection labelled `{0}`")]
    UnknownLabel(String),
    #[error("injection `{label}` cannot be swept along {axis}")]
    WrongKind { label: String, axis: &'static str },
    #[error("sweep value {0} is out of range for this axis")]
    BadValue(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// `spec` with the axis set to `value`.
pub fn variant(spec: &ScenarioSpec, axis: &SweepAxis, value: f64) -> Result<ScenarioSpec, SweepError> {
    let mut s = spec.clone();
    let label = axis.label();
    let idx = s.injections.iter().position(|i| i.label == label);
    match axis {
        SweepAxis::DropChannelDuration { .. } => {
            let i = idx.ok_or_else(|| SweepError::UnknownLabel(label.into()))?;
            if value < 0.0 || value.fract() != 0.0 {
                return Err(SweepError::BadValue(value));
            }
            if value == 0.0 {
                s.injections.remove(i);
                return Ok(s);
            }
            match &mut s.injections[i].action {
                PerturbationAction::DropChannel { duration, .. } => *duration = value as u32,
                _ => return Err(SweepError::WrongKind { label: label.into(), axis: axis.name() }),
            }
        }
        SweepAxis::CorruptProbability { .. } => {
            let i = idx.ok_or_else(|| SweepError::UnknownLabel(label.into()))?;
            if !(0.0..=1.0).contains(&value) {
                return Err(SweepError::BadValue(value));
            }
            match &mut s.injections[i].action {
                PerturbationAction::CorruptMessage { probability, .. } => *probability = value,
                _ => return Err(SweepError::WrongKind { label: label.into(), axis: axis.name() }),
            }
        }
        SweepAxis::Deadline { .. } => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(SweepError::BadValue(value));
            }
            let horizon = value as u32;
            match idx {
                Some(i) => match &mut s.injections[i].action {
                    PerturbationAction::DeadlinePressure { horizon: h } => *h = horizon,
                    _ => return Err(SweepError::WrongKind { label: label.into(), axis: axis.name() }),
                },
                None => s.injections.push(PerturbationSpec::new(
                    label,
                    Trigger {
                        at_step: Some(0),
                        ..Default::default()
                    },
                    PerturbationAction::DeadlinePressure { horizon },
                )),
            }
        }
    }
    Ok(s)
}

/// One ensemble of `n` runs per value. Every point uses the same seeds
/// `base_seed..base_seed+n`, so per-seed deltas are attributable to the axis.
pub fn sweep(
    spec: &ScenarioSpec,
    axis: &SweepAxis,
    values: &[f64],
    n: usize,
    base_seed: u64,
    options: &EngineOptions,
) -> Result<Vec<SweepPoint>, SweepError> {
    let seeds = seeds_from(base_seed, n);
    values
        .iter()
        .map(|&value| {
            let v = variant(spec, axis, value)?;
            Ok(SweepPoint {
                value,
                ensemble: run_ensemble(&v, &seeds, options)?,
            })
        })
        .collect()
}
