use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, AgentRng};

/// Per-task-tag success probabilities. Spikes and troughs in an agent's
/// competence are just entries near 1 and near 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CapabilityTable {
    #[serde(default)]
    pub tags: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

impl CapabilityTable {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        CapabilityTable {
            tags: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            default: None,
        }
    }

    pub fn with_default(mut self, p: f64) -> Self {
        self.default = Some(p);
        self
    }

    pub fn probability(&self, tag: &str) -> Result<f64, AgentError> {
        self.tags
            .get(tag)
            .copied()
            .or(self.default)
            .ok_or_else(|| AgentError::MissingCapability(tag.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty() && self.default.is_none()
    }

    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (tag, p) in &self.tags {
            if !(0.0..=1.0).contains(p) {
                out.push(format!("capability `{tag}` probability {p} outside [0,1]"));
            }
        }
        if let Some(p) = self.default {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("default capability probability {p} outside [0,1]"));
            }
        }
        out
    }
}

/// One Bernoulli draw from the tag's probability. Always consumes exactly one
/// uniform from `rng`, so streams stay aligned across configurations.
pub fn capability_lookup(table: &CapabilityTable, tag: &str, rng: &mut AgentRng) -> Result<bool, AgentError> {
    let p = table.probability(tag)?;
    let u: f64 = rng.gen();
    Ok(u < p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_probability_always_fails() {
        let t = CapabilityTable::from_pairs([("chartRead", 0.0)]);
        for seed in 0..200 {
            let mut rng = AgentRng::seed_from_u64(seed);
            assert!(!capability_lookup(&t, "chartRead", &mut rng).unwrap());
        }
    }

    #[test]
    fn unit_probability_always_succeeds() {
        let t = CapabilityTable::from_pairs([("summarise", 1.0)]);
        for seed in 0..200 {
            let mut rng = AgentRng::seed_from_u64(seed);
            assert!(capability_lookup(&t, "summarise", &mut rng).unwrap());
        }
    }

    #[test]
    fn missing_tag_without_default() {
        let t = CapabilityTable::from_pairs([("a", 0.5)]);
        let mut rng = AgentRng::seed_from_u64(0);
        assert!(matches!(
            capability_lookup(&t, "b", &mut rng),
            Err(AgentError::MissingCapability(_))
        ));
        let t = t.with_default(1.0);
        assert!(capability_lookup(&t, "b", &mut rng).unwrap());
    }

    #[test]
    fn parse_rate_converges() {
        // 10,000 independent seeded draws at p = 0.7; tolerance 0.02 is ~4.4 sigma.
        let t = CapabilityTable::from_pairs([("parse", 0.7)]);
        let hits = (0..10_000u64)
            .filter(|&s| {
                let mut rng = AgentRng::seed_from_u64(s);
                capability_lookup(&t, "parse", &mut rng).unwrap()
            })
            .count();
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.7).abs() <= 0.02, "rate {rate}");
    }
}
