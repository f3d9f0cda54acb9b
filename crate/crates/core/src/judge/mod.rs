//! Utterance labelling over trace messages, judge calibration against human
//! annotations, and communication-failure detectors.

mod calibrate;
mod detect;
mod external;
mod rules;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::Message;

pub use calibrate::{
    calibrate, calibrate_labels, AnnotationSet, Annotation, CalibrationReport, ClassStats, MessageRef, TraceStore,
};
pub use detect::{
    detect_ambiguous_terms, detect_ignored_requests, ignored_requests_in_trace, AmbiguityFlag, IgnoredRequest,
    DEFAULT_AMBIGUOUS_TERMS,
};
pub use external::{
    parse_rubric_scores, ExternalJudge, JudgeTransport, ENDPOINT_VAR, KEY_VAR, PLANNING_RUBRIC, RUBRIC_DIMENSIONS,
};
pub use rules::{Rule, RuleSet};

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("nothing to classify")]
    Empty,
    #[error("annotation {index}: cannot resolve {reference}")]
    Unresolvable { index: usize, reference: String },
    #[error("annotation file: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("ruleset: {0}")]
    Ruleset(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Utterance category. Names outside the built-in set are kept as
/// scenario-defined extensions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Category {
    InfoSharing,
    Negotiation,
    Persuasion,
    Agreement,
    Critique,
    ClarificationRequest,
    IgnoredRequestMarker,
    Other,
    Custom(String),
}

impl Category {
    pub const BUILTIN: [Category; 8] = [
        Category::InfoSharing,
        Category::Negotiation,
        Category::Persuasion,
        Category::Agreement,
        Category::Critique,
        Category::ClarificationRequest,
        Category::IgnoredRequestMarker,
        Category::Other,
    ];

    pub fn name(&self) -> &str {
        match self {
            Category::InfoSharing => "info_sharing",
            Category::Negotiation => "negotiation",
            Category::Persuasion => "persuasion",
            Category::Agreement => "agreement",
            Category::Critique => "critique",
            Category::ClarificationRequest => "clarification_request",
            Category::IgnoredRequestMarker => "ignored_request_marker",
            Category::Other => "other",
            Category::Custom(s) => s,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<String> for Category {
    fn from(s: String) -> Self {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Category::BUILTIN
            .iter()
            .find(|c| c.name() == key)
            .cloned()
            .unwrap_or(Category::Custom(s.trim().to_string()))
    }
}

impl From<Category> for String {
    fn from(c: Category) -> Self {
        c.name().to_string()
    }
}

impl FromStr for Category {
    type Err = JudgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Err(JudgeError::UnknownCategory(s.into()));
        }
        Ok(Category::from(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceLabel {
    pub category: Category,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl UtteranceLabel {
    pub fn certain(category: Category) -> Self {
        UtteranceLabel {
            category,
            confidence: 1.0,
            note: None,
        }
    }
}

/// Anything that assigns one label per utterance.
pub trait Judge: Send + Sync {
    fn label(&self, content: &str) -> UtteranceLabel;
}

/// One label per message, in order.
pub fn classify(judge: &dyn Judge, messages: &[Message]) -> Result<Vec<UtteranceLabel>, JudgeError> {
    if messages.is_empty() {
        return Err(JudgeError::Empty);
    }
    Ok(messages.iter().map(|m| judge.label(&m.content)).collect())
}

/// Label counts keyed by category name.
pub fn category_distribution(labels: &[UtteranceLabel]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for l in labels {
        *out.entry(l.category.to_string()).or_default() += 1;
    }
    out
}
