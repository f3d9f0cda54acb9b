use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum MessageKind {
    #[default]
    Statement,
    Request,
    Response,
    Vote,
    Prediction,
    Reflection,
}


/// One inter-agent message as recorded in a trace.
///
/// `taint` carries the injection labels (or declared seed-error labels) that
/// this message descends from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub step: u32,
    pub from: AgentId,
    pub to: BTreeSet<AgentId>,
    pub content: String,
    pub kind: MessageKind,
    #[serde(default)]
    pub taint: BTreeSet<String>,
}

impl Message {
    pub fn is_addressed_to(&self, agent: &AgentId) -> bool {
        self.to.contains(agent)
    }
}
