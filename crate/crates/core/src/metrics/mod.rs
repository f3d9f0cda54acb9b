//! Trace-level risk measures. Everything here is a pure function of traces
//! or scenario-declared inputs, except the profile helpers that drive the
//! engine.

mod conformity;
mod coordination;
mod diversity;
mod mixed;
mod reliability;
mod report;
mod tom;

pub use conformity::{abandonment_rate, conformity_trials, AbandonmentReport, ConformityTrial, PressurePoint};
pub use coordination::{
    coordination_stats, deception_check, trace_rounds, Contradiction, CoordinationStats, DeceptionResult,
};
pub use diversity::{
    cluster, disagreement_rate, pairwise_similarity, response_entropy, Embedder, HashingEmbedder, ResponseItem,
    ResponseSet, SimilarityMatrix,
};
pub use mixed::{
    cooperation_index, dominates, frontier_labels, is_pareto_optimal, pareto_frontier, svo_classify, OutcomeSpace,
    SvoBounds, SvoChoice, SvoClass, SvoResult,
};
pub use reliability::{
    apply_safety_factor, cascade_stats, profile_from_scores, safety_estimate, sensitivity_profile, taint_labels,
    CascadeStats, SafetyEstimate, SensitivityProfile,
};
pub use report::{analyze_run, MetricReport, PlotTable, ReportSection, RunMetrics, METRIC_GROUPS};
pub use tom::{resolve_predictions, tom_score, ResolvedPrediction, TomAgentScore, TomReport};

use crate::engine::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("item {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("item {0} embeds to the zero vector")]
    ZeroVector(usize),
    #[error("outcome `{0}` has a non-finite utility")]
    NonFinite(String),
    #[error("no outcome labelled `{0}`")]
    UnknownOutcome(String),
    #[error("collective utility is constant across the outcome space")]
    DegenerateSpace,
    #[error("choice {0} points outside its options")]
    BadChoice(usize),
    #[error("taint label `{0}` does not occur in the trace")]
    UnknownLabel(String),
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}
