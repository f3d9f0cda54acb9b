use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentBehavior, AgentDecision, AgentError, AgentMemory, AgentRng, Observation, OutgoingMessage, Recipients};
use crate::model::{Action, MessageKind};

const ANSWER_PREFIX: &str = "answer: ";

fn default_min_pressure() -> u32 {
    1
}

/// Holds a categorical answer and abandons it under majority pressure.
///
/// Each step the agent tallies peer `Vote` messages in its inbox. When the
/// most popular dissenting answer outnumbers the supporters of its own answer
/// and has at least `min_pressure` votes, the agent switches with
/// probability `switch_probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SycophantSpec {
    pub initial_answer: String,
    pub switch_probability: f64,
    #[serde(default = "default_min_pressure")]
    pub min_pressure: u32,
}

impl SycophantSpec {
    pub fn new(initial_answer: impl Into<String>, switch_probability: f64) -> Self {
        SycophantSpec {
            initial_answer: initial_answer.into(),
            switch_probability,
            min_pressure: default_min_pressure(),
        }
    }

    pub fn with_min_pressure(mut self, k: u32) -> Self {
        self.min_pressure = k;
        self
    }

    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.switch_probability) {
            out.push(format!("switch_probability {} outside [0,1]", self.switch_probability));
        }
        if self.initial_answer.is_empty() {
            out.push("initial_answer is empty".into());
        }
        out
    }
}

/// Current stance: the latest `answer: X` memory entry, else `initial`.
pub(crate) fn current_answer(memory: &AgentMemory, initial: &str) -> String {
    memory
        .entries()
        .rev()
        .find_map(|e| e.text.strip_prefix(ANSWER_PREFIX))
        .unwrap_or(initial)
        .to_string()
}

fn stance_decision(answer: String, extra: Option<String>) -> AgentDecision {
    let mut d = AgentDecision::default();
    if let Some(text) = extra {
        d.messages.push(OutgoingMessage {
            to: Recipients::AllPeers,
            content: text,
            kind: MessageKind::Statement,
        });
    }
    d.messages.push(OutgoingMessage {
        to: Recipients::AllPeers,
        content: answer.clone(),
        kind: MessageKind::Vote,
    });
    d.action = Some(Action::new(format!("stance:{answer}")));
    d.memory_append = Some(format!("{ANSWER_PREFIX}{answer}"));
    d
}

pub struct SycophantBehavior {
    spec: SycophantSpec,
}

impl SycophantBehavior {
    pub fn new(spec: SycophantSpec) -> Self {
        SycophantBehavior { spec }
    }
}

impl AgentBehavior for SycophantBehavior {
    fn decide(&self, memory: &AgentMemory, obs: &Observation, rng: &mut AgentRng) -> Result<AgentDecision, AgentError> {
        let mut answer = current_answer(memory, &self.spec.initial_answer);
        let mut tally: BTreeMap<&str, u32> = BTreeMap::new();
        for m in obs.inbox.iter().filter(|m| m.kind == MessageKind::Vote && m.from != obs.agent) {
            *tally.entry(m.content.trim()).or_default() += 1;
        }
        let supporters = tally.get(answer.as_str()).copied().unwrap_or(0);
        // BTreeMap iteration plus strict `>` keeps the lexicographically first on ties.
        let mut rival: Option<(&str, u32)> = None;
        for (&stance, &n) in tally.iter().filter(|(s, _)| **s != answer) {
            if rival.is_none_or(|(_, best)| n > best) {
                rival = Some((stance, n));
            }
        }
        if let Some((stance, n)) = rival {
            if n > supporters && n >= self.spec.min_pressure {
                let u: f64 = rng.gen();
                if u < self.spec.switch_probability {
                    answer = stance.to_string();
                }
            }
        }
        Ok(stance_decision(answer, None))
    }

    fn answer_probe(&self, memory: &AgentMemory, _obs: &Observation, _question: &str) -> Result<String, AgentError> {
        Ok(current_answer(memory, &self.spec.initial_answer))
    }
}

fn default_critique() -> String {
    "However, we should also consider {stance}.".into()
}

/// Never changes its stance; challenges the group every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrarianSpec {
    pub stance: String,
    #[serde(default = "default_critique")]
    pub critique: String,
}

impl ContrarianSpec {
    pub fn new(stance: impl Into<String>) -> Self {
        ContrarianSpec {
            stance: stance.into(),
            critique: default_critique(),
        }
    }
}

pub struct ContrarianBehavior {
    spec: ContrarianSpec,
}

impl ContrarianBehavior {
    pub fn new(spec: ContrarianSpec) -> Self {
        ContrarianBehavior { spec }
    }
}

impl AgentBehavior for ContrarianBehavior {
    fn decide(&self, _memory: &AgentMemory, _obs: &Observation, _rng: &mut AgentRng) -> Result<AgentDecision, AgentError> {
        let critique = self.spec.critique.replace("{stance}", &self.spec.stance);
        Ok(stance_decision(self.spec.stance.clone(), Some(critique)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::BehaviorSpec;
    use crate::model::{AgentId, Message};
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    fn votes(stances: &[&str]) -> Observation {
        let mut obs = Observation::new(1, "s");
        for (i, s) in stances.iter().enumerate() {
            obs.inbox.push(Message {
                step: 0,
                from: AgentId::new(format!("p{i}")),
                to: BTreeSet::new(),
                content: s.to_string(),
                kind: MessageKind::Vote,
                taint: BTreeSet::new(),
            });
        }
        obs
    }

    fn adopted(spec: &SycophantSpec, obs: &Observation, seed: u64) -> String {
        let d = SycophantBehavior::new(spec.clone())
            .decide(&AgentMemory::new(4), obs, &mut AgentRng::seed_from_u64(seed))
            .unwrap();
        d.action.unwrap().label.trim_start_matches("stance:").to_string()
    }

    #[test]
    fn certain_switch_adopts_majority() {
        let spec = SycophantSpec::new("X", 1.0);
        assert_eq!(adopted(&spec, &votes(&["Y", "Y"]), 0), "Y");
    }

    #[test]
    fn no_switch_without_a_majority() {
        let spec = SycophantSpec::new("X", 1.0);
        assert_eq!(adopted(&spec, &votes(&["Y", "X"]), 0), "X");
    }

    #[test]
    fn pressure_threshold() {
        let spec = SycophantSpec::new("X", 1.0).with_min_pressure(3);
        assert_eq!(adopted(&spec, &votes(&["Y", "Y"]), 0), "X");
        assert_eq!(adopted(&spec, &votes(&["Y", "Y", "Y"]), 0), "Y");
    }

    #[test]
    fn switch_frequency_converges_to_q() {
        // Binomial sd at q=0.3, N=10,000 is 0.0046; 0.02 is over 4 sigma.
        let spec = SycophantSpec::new("X", 0.3);
        let obs = votes(&["Y", "Y"]);
        let n = 10_000u64;
        let switched = (0..n).filter(|&s| adopted(&spec, &obs, s) == "Y").count();
        let rate = switched as f64 / n as f64;
        assert!((rate - 0.3).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn remembered_answer_persists() {
        let mut mem = AgentMemory::new(4);
        mem.push(0, "answer: Z");
        assert_eq!(current_answer(&mem, "X"), "Z");
    }

    #[test]
    fn contrarian_critiques() {
        let spec = BehaviorSpec::Contrarian(ContrarianSpec::new("trade-shows"));
        let d = crate::agents::decide(&spec, &AgentMemory::new(1), &Observation::new(0, "c"), &mut AgentRng::seed_from_u64(0)).unwrap();
        assert_eq!(d.messages[0].content, "However, we should also consider trade-shows.");
        assert_eq!(d.messages[1].kind, MessageKind::Vote);
    }
}
