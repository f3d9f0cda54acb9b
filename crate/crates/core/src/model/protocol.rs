use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TurnOrdering {
    /// Declaration order every step.
    #[default]
    Fixed,
    /// Declaration order rotated left by the step index.
    Rotating,
    /// Shuffled per step from the run's seeded ordering stream.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommModel {
    /// Every message is split into one copy per recipient.
    Pairwise,
    /// Every message goes to the sender's full allowed recipient set.
    Broadcast,
    /// Explicit recipient subsets.
    #[default]
    Multicast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    None,
    MajorityVote,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub rounds: u32,
    #[serde(default)]
    pub ordering: TurnOrdering,
    #[serde(default)]
    pub comm_model: CommModel,
    /// Agents get a private reflection step between rounds.
    #[serde(default)]
    pub reflection: bool,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl ProtocolConfig {
    pub fn rounds(rounds: u32) -> Self {
        ProtocolConfig {
            rounds,
            ordering: TurnOrdering::Fixed,
            comm_model: CommModel::Multicast,
            reflection: false,
            aggregation: Aggregation::None,
        }
    }
}
