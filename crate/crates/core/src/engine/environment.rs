use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::model::{Action, AgentDecl, AgentId, EnvironmentSpec, Predicate, State, Value};

/// The world agents act on. Transitions must be pure in
/// `(state, action, stream)`; milestones only ever read the state.
pub trait Environment: Send + Sync {
    fn initial_state(&self) -> State;

    /// Applies one agent action.
    fn apply(&self, state: &mut State, agent: &AgentId, action: &Action, step: u32, rng: &mut ChaCha8Rng) -> Result<(), EngineError>;

    /// End-of-step evolution (rules, scheduled shocks).
    fn advance(&self, state: &mut State, step: u32, rng: &mut ChaCha8Rng) -> Result<(), EngineError>;

    /// Projection an agent may observe.
    fn view(&self, state: &State, agent: &AgentDecl) -> State {
        match &agent.view {
            None => state.clone(),
            Some(keys) => keys
                .iter()
                .filter_map(|k| state.get(k).map(|v| (k.clone(), v.clone())))
                .collect(),
        }
    }
}

/// Parameters of the built-in `declarative` environment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeclarativeParams {
    #[serde(default)]
    pub initial: BTreeMap<String, Value>,
    #[serde(default)]
    pub effects: Vec<Effect>,
    #[serde(default)]
    pub rules: Vec<EnvRule>,
    /// Scheduled exogenous state changes.
    #[serde(default)]
    pub shocks: Vec<Shock>,
}

/// Reaction to an action label; `prefix*` matches by prefix. String values
/// beginning with `$` are substituted: `$agent`, `$label`, `$step`, or an
/// action param name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub on_action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentId>,
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
    /// Numeric increments.
    #[serde(default)]
    pub add: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRule {
    pub when: Vec<Predicate>,
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub at_step: u32,
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone)]
pub struct DeclarativeEnvironment {
    params: DeclarativeParams,
}

impl DeclarativeEnvironment {
    pub fn new(params: DeclarativeParams) -> Self {
        DeclarativeEnvironment { params }
    }

    pub fn from_value(v: &Value) -> Result<Self, EngineError> {
        if v.is_null() {
            return Ok(DeclarativeEnvironment::new(DeclarativeParams::default()));
        }
        serde_json::from_value(v.clone())
            .map(DeclarativeEnvironment::new)
            .map_err(|e| EngineError::EnvParams(e.to_string()))
    }
}

fn label_matches(pattern: &str, label: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => label.starts_with(prefix),
        None => pattern == label,
    }
}

fn resolve(v: &Value, agent: &AgentId, action: &Action, step: u32) -> Result<Value, EngineError> {
    let Some(name) = v.as_str().and_then(|s| s.strip_prefix('$')) else {
        return Ok(v.clone());
    };
    Ok(match name {
        "agent" => Value::String(agent.to_string()),
        "label" => Value::String(action.label.clone()),
        "step" => Value::from(step),
        param => action.params.get(param).cloned().ok_or_else(|| {
            EngineError::EnvParams(format!("action `{}` has no param `{param}`", action.label))
        })?,
    })
}

impl Environment for DeclarativeEnvironment {
    fn initial_state(&self) -> State {
        self.params.initial.clone()
    }

    fn apply(&self, state: &mut State, agent: &AgentId, action: &Action, step: u32, _rng: &mut ChaCha8Rng) -> Result<(), EngineError> {
        for e in &self.params.effects {
            if !label_matches(&e.on_action, &action.label) || e.agent.as_ref().is_some_and(|a| a != agent) {
                continue;
            }
            for (k, v) in &e.set {
                state.insert(k.clone(), resolve(v, agent, action, step)?);
            }
            for (k, v) in &e.add {
                let delta = resolve(v, agent, action, step)?
                    .as_f64()
                    .ok_or_else(|| EngineError::EnvParams(format!("`add.{k}` is not numeric")))?;
                let current = state.get(k).and_then(Value::as_f64).unwrap_or(0.0);
                state.insert(k.clone(), number(current + delta));
            }
        }
        Ok(())
    }

    fn advance(&self, state: &mut State, step: u32, _rng: &mut ChaCha8Rng) -> Result<(), EngineError> {
        for s in self.params.shocks.iter().filter(|s| s.at_step == step) {
            state.extend(s.set.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        for r in &self.params.rules {
            if r.when.iter().all(|p| p.eval(state)) {
                state.extend(r.set.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
        }
        Ok(())
    }
}

/// Integral floats are stored as integers so canonical text stays stable.
fn number(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Value::from(x as i64)
    } else {
        Value::from(x)
    }
}

pub type EnvFactory = Arc<dyn Fn(&Value) -> Result<Box<dyn Environment>, EngineError> + Send + Sync>;

/// Named environment constructors. Always contains `declarative`.
#[derive(Clone)]
pub struct EnvironmentRegistry {
    factories: BTreeMap<String, EnvFactory>,
}

impl fmt::Debug for EnvironmentRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for EnvironmentRegistry {
    fn default() -> Self {
        let mut r = EnvironmentRegistry {
            factories: BTreeMap::new(),
        };
        r.register("declarative", |params| {
            Ok(Box::new(DeclarativeEnvironment::from_value(params)?) as Box<dyn Environment>)
        });
        r
    }
}

impl EnvironmentRegistry {
    pub fn register<F>(&mut self, name: impl Into<String>, factory: F)
    where
        F: Fn(&Value) -> Result<Box<dyn Environment>, EngineError> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Arc::new(factory));
    }

    pub fn create(&self, spec: &EnvironmentSpec) -> Result<Box<dyn Environment>, EngineError> {
        let f = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| EngineError::UnknownEnvironment(spec.name.clone()))?;
        f(&spec.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use serde_json::json;

    #[test]
    fn effects_rules_and_shocks() {
        let env = DeclarativeEnvironment::from_value(&json!({
            "initial": {"orders": 0},
            "effects": [
                {"on_action": "order", "add": {"orders": "$quantity"}, "set": {"last_by": "$agent"}},
                {"on_action": "stance:*", "set": {"stance": "$label"}}
            ],
            "rules": [{"when": [{"key": "orders", "op": "gt", "value": 50000}], "set": {"overcommitted": true}}],
            "shocks": [{"at_step": 2, "set": {"demand": "surge"}}]
        }))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = env.initial_state();
        let a: AgentId = "p".into();
        env.apply(&mut s, &a, &Action::new("order").with_param("quantity", 105000), 1, &mut rng).unwrap();
        env.apply(&mut s, &a, &Action::new("stance:x"), 1, &mut rng).unwrap();
        env.advance(&mut s, 1, &mut rng).unwrap();
        assert_eq!(s["orders"], json!(105000));
        assert_eq!(s["last_by"], json!("p"));
        assert_eq!(s["stance"], json!("stance:x"));
        assert_eq!(s["overcommitted"], json!(true));
        assert!(!s.contains_key("demand"));
        env.advance(&mut s, 2, &mut rng).unwrap();
        assert_eq!(s["demand"], json!("surge"));
    }

    #[test]
    fn missing_param_is_an_error() {
        let env = DeclarativeEnvironment::from_value(&json!({
            "effects": [{"on_action": "order", "set": {"q": "$quantity"}}]
        }))
        .unwrap();
        let mut s = State::new();
        let r = env.apply(&mut s, &"a".into(), &Action::new("order"), 0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(EngineError::EnvParams(_))));
    }

    #[test]
    fn unknown_environment() {
        let r = EnvironmentRegistry::default().create(&EnvironmentSpec {
            name: "storyteller".into(),
            params: Value::Null,
        });
        assert!(matches!(r, Err(EngineError::UnknownEnvironment(_))));
    }
}
