use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::{Captures, Regex};

use crate::model::Value;

/// Bindings available to `{placeholder}` substitution in scripted text.
///
/// Recognised names: `content`, `sender`, `self`, `step`, `objective`,
/// `memory`, `last_memory`, `tag`, `input`, `env.KEY`, `belief.KEY`.
/// Unknown placeholders are left as written.
#[derive(Debug, Default)]
pub struct Bindings<'a> {
    pub content: Option<&'a str>,
    pub sender: Option<&'a str>,
    pub agent: &'a str,
    pub step: u32,
    pub objective: &'a str,
    pub memory: String,
    pub last_memory: &'a str,
    pub tag: Option<&'a str>,
    pub input: Option<&'a str>,
    pub env: Option<&'a BTreeMap<String, Value>>,
    pub beliefs: Option<&'a BTreeMap<String, String>>,
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)(?:\.([A-Za-z0-9_\-]+))?\}").unwrap())
}

pub fn render(template: &str, b: &Bindings<'_>) -> String {
    placeholder()
        .replace_all(template, |caps: &Captures<'_>| {
            let whole = caps[0].to_string();
            let key = caps.get(2).map(|m| m.as_str());
            let found: Option<String> = match (&caps[1], key) {
                ("content", None) => b.content.map(str::to_string),
                ("sender", None) => b.sender.map(str::to_string),
                ("self", None) => Some(b.agent.to_string()),
                ("step", None) => Some(b.step.to_string()),
                ("objective", None) => Some(b.objective.to_string()),
                ("memory", None) => Some(b.memory.clone()),
                ("last_memory", None) => Some(b.last_memory.to_string()),
                ("tag", None) => b.tag.map(str::to_string),
                ("input", None) => b.input.map(str::to_string),
                ("env", Some(k)) => b.env.and_then(|e| e.get(k)).map(value_text),
                ("belief", Some(k)) => b.beliefs.and_then(|m| m.get(k)).cloned(),
                _ => None,
            };
            found.unwrap_or(whole)
        })
        .into_owned()
}

pub(crate) fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn substitutes_known_names_and_keeps_unknown() {
        let mut env = BTreeMap::new();
        env.insert("chart".to_string(), json!("10.5K units"));
        env.insert("n".to_string(), json!(4));
        let b = Bindings {
            content: Some("ping"),
            sender: Some("a"),
            agent: "b",
            step: 3,
            env: Some(&env),
            ..Default::default()
        };
        assert_eq!(
            render("{sender}->{self}@{step}: {content} {env.chart} {env.n} {nope} {env.missing}", &b),
            "a->b@3: ping 10.5K units 4 {nope} {env.missing}"
        );
    }
}
