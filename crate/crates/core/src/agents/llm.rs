//! Request/response contract for model-backed agents.
//!
//! The core ships no vendor client. A transport carries an [`AdapterRequest`]
//! across a process boundary and returns free text, which a
//! [`DecisionParser`] turns into a decision. Failures are errors, never
//! silent defaults.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AgentBehavior, AgentDecision, AgentError, AgentMemory, AgentRng, Observation, OutgoingMessage, Prediction, Recipients};
use crate::model::{Action, AgentId, MessageKind, Value};

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmAdapterSpec {
    pub model: String,
    #[serde(default)]
    pub system_prompt: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Executable plus arguments used when the engine supplies no transport.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    Objective,
    Memory,
    Inbox,
    Question,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub agent: AgentId,
    pub step: u32,
    pub model: String,
    pub messages: Vec<RoleMessage>,
    pub timeout_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("timed out after {0} ms")]
    Timeout(u64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("adapter exited with status {code:?}: {stderr}")]
    Exit { code: Option<i32>, stderr: String },
    #[error("adapter output is not utf-8")]
    Encoding,
}

pub trait LlmTransport: Send + Sync {
    fn complete(&self, request: &AdapterRequest) -> Result<String, TransportError>;
}

/// Runs an external program per request: JSON request on stdin, free-text
/// response on stdout. The child is killed on timeout.
#[derive(Debug, Clone)]
pub struct CommandTransport {
    program: String,
    args: Vec<String>,
    env: Vec<(String, String)>,
}

impl CommandTransport {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandTransport {
            program: program.into(),
            args,
            env: Vec::new(),
        }
    }

    pub fn from_argv(argv: &[String]) -> Option<Self> {
        let (program, args) = argv.split_first()?;
        Some(CommandTransport::new(program.clone(), args.to_vec()))
    }

    pub fn with_env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    pub fn run(&self, input: &[u8], timeout_ms: u64) -> Result<String, TransportError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .envs(self.env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        child.stdin.take().expect("piped").write_all(input)?;
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let deadline = Instant::now() + Duration::from_millis(timeout_ms);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(TransportError::Timeout(timeout_ms));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let out = out_reader.join().expect("reader thread")?;
        let err = err_reader.join().expect("reader thread");
        if !status.success() {
            return Err(TransportError::Exit {
                code: status.code(),
                stderr: err.trim().to_string(),
            });
        }
        String::from_utf8(out).map_err(|_| TransportError::Encoding)
    }
}

impl LlmTransport for CommandTransport {
    fn complete(&self, request: &AdapterRequest) -> Result<String, TransportError> {
        let body = serde_json::to_vec(request).expect("requests serialise");
        self.run(&body, request.timeout_ms)
    }
}

pub trait DecisionParser: Send + Sync {
    fn parse(&self, response: &str, obs: &Observation) -> Result<AgentDecision, AgentError>;
}

/// One directive per line:
///
/// ```text
/// SAY <to|*> <text>        statement; `to` is comma-separated or `*`
/// ASK <to> <text>          request
/// REPLY <to> <text>        response
/// VOTE <stance>
/// ACT <label> [k=v ...]
/// PREDICT <agent> <label>
/// REMEMBER <text>
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct LineProtocolParser;

fn recipients(field: &str) -> Recipients {
    if field == "*" {
        Recipients::AllPeers
    } else {
        Recipients::Agents(field.split(',').filter(|s| !s.is_empty()).map(AgentId::from).collect())
    }
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    match s.split_once(char::is_whitespace) {
        Some((a, b)) => (a, b.trim()),
        None => (s, ""),
    }
}

impl DecisionParser for LineProtocolParser {
    fn parse(&self, response: &str, obs: &Observation) -> Result<AgentDecision, AgentError> {
        let mut d = AgentDecision::default();
        let mut any = false;
        for (n, line) in response.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            any = true;
            let (verb, rest) = split_word(line);
            let bad = |what: &str| AgentError::Parse(format!("line {}: {what}", n + 1));
            match verb.to_ascii_uppercase().as_str() {
                v @ ("SAY" | "ASK" | "REPLY") => {
                    let (to, text) = split_word(rest);
                    if to.is_empty() || text.is_empty() {
                        return Err(bad("expected recipients and text"));
                    }
                    let kind = match v {
                        "SAY" => MessageKind::Statement,
                        "ASK" => MessageKind::Request,
                        _ => MessageKind::Response,
                    };
                    d.messages.push(OutgoingMessage {
                        to: recipients(to),
                        content: text.to_string(),
                        kind,
                    });
                }
                "VOTE" if !rest.is_empty() => d.messages.push(OutgoingMessage {
                    to: Recipients::AllPeers,
                    content: rest.to_string(),
                    kind: MessageKind::Vote,
                }),
                "ACT" if !rest.is_empty() => {
                    let mut words = rest.split_whitespace();
                    let mut action = Action::new(words.next().unwrap_or_default());
                    for kv in words {
                        let (k, v) = kv.split_once('=').ok_or_else(|| bad("action params are k=v"))?;
                        let value = serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::String(v.into()));
                        action.params.insert(k.into(), value);
                    }
                    d.set_action(action, obs.step)?;
                }
                "PREDICT" => {
                    let (target, label) = split_word(rest);
                    if target.is_empty() || label.is_empty() {
                        return Err(bad("expected target and label"));
                    }
                    d.predictions.push(Prediction {
                        target: target.into(),
                        label: label.to_string(),
                        distribution: None,
                    });
                }
                "REMEMBER" if !rest.is_empty() => d.remember(rest.to_string()),
                other => return Err(bad(&format!("unknown directive `{other}`"))),
            }
        }
        if !any {
            return Err(AgentError::Parse("empty response".into()));
        }
        Ok(d)
    }
}

pub struct LlmAdapterBehavior {
    spec: LlmAdapterSpec,
    transport: Arc<dyn LlmTransport>,
    parser: Box<dyn DecisionParser>,
}

impl LlmAdapterBehavior {
    pub fn new(spec: LlmAdapterSpec, transport: Arc<dyn LlmTransport>, parser: Box<dyn DecisionParser>) -> Self {
        LlmAdapterBehavior { spec, transport, parser }
    }

    fn request(&self, memory: &AgentMemory, obs: &Observation, question: Option<&str>) -> AdapterRequest {
        let inbox = obs
            .inbox
            .iter()
            .map(|m| format!("[{}] {} ({:?}): {}", m.step, m.from, m.kind, m.content))
            .collect::<Vec<_>>()
            .join("\n");
        let mut messages = vec![
            RoleMessage {
                role: Role::System,
                content: self.spec.system_prompt.clone(),
            },
            RoleMessage {
                role: Role::Objective,
                content: obs.objective.clone(),
            },
            RoleMessage {
                role: Role::Memory,
                content: memory.digest(),
            },
            RoleMessage {
                role: Role::Inbox,
                content: inbox,
            },
        ];
        if let Some(q) = question {
            messages.push(RoleMessage {
                role: Role::Question,
                content: q.to_string(),
            });
        }
        AdapterRequest {
            agent: obs.agent.clone(),
            step: obs.step,
            model: self.spec.model.clone(),
            messages,
            timeout_ms: self.spec.timeout_ms,
        }
    }
}

impl AgentBehavior for LlmAdapterBehavior {
    fn decide(&self, memory: &AgentMemory, obs: &Observation, _rng: &mut AgentRng) -> Result<AgentDecision, AgentError> {
        let text = self.transport.complete(&self.request(memory, obs, None))?;
        self.parser.parse(&text, obs)
    }

    fn answer_probe(&self, memory: &AgentMemory, obs: &Observation, question: &str) -> Result<String, AgentError> {
        Ok(self.transport.complete(&self.request(memory, obs, Some(question)))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    struct Canned(&'static str);

    impl LlmTransport for Canned {
        fn complete(&self, _request: &AdapterRequest) -> Result<String, TransportError> {
            Ok(self.0.to_string())
        }
    }

    fn spec() -> LlmAdapterSpec {
        LlmAdapterSpec {
            model: "stub".into(),
            system_prompt: String::new(),
            timeout_ms: 1_000,
            command: Vec::new(),
        }
    }

    #[test]
    fn line_protocol_round_trip() {
        let b = LlmAdapterBehavior::new(
            spec(),
            Arc::new(Canned("SAY * hello all\nASK ops what is the load?\nACT order quantity=105000\nPREDICT pricing raise_prices\nREMEMBER noted")),
            Box::new(LineProtocolParser),
        );
        let d = b
            .decide(&AgentMemory::new(2), &Observation::new(0, "a"), &mut AgentRng::seed_from_u64(0))
            .unwrap();
        assert_eq!(d.messages.len(), 2);
        assert_eq!(d.messages[1].kind, MessageKind::Request);
        let action = d.action.unwrap();
        assert_eq!(action.label, "order");
        assert_eq!(action.params["quantity"], serde_json::json!(105000));
        assert_eq!(d.predictions[0].label, "raise_prices");
        assert_eq!(d.memory_append.as_deref(), Some("noted"));
    }

    #[test]
    fn garbage_is_a_parse_error_not_a_default() {
        let b = LlmAdapterBehavior::new(spec(), Arc::new(Canned("I think we should wait")), Box::new(LineProtocolParser));
        let r = b.decide(&AgentMemory::new(2), &Observation::new(0, "a"), &mut AgentRng::seed_from_u64(0));
        assert!(matches!(r, Err(AgentError::Parse(_))));
    }

    #[cfg(unix)]
    #[test]
    fn command_transport_times_out() {
        let t = CommandTransport::new("sleep", vec!["5".into()]);
        let err = t.run(b"", 50).unwrap_err();
        assert!(matches!(err, TransportError::Timeout(50)));
    }

    #[cfg(unix)]
    #[test]
    fn command_transport_reads_stdout() {
        let t = CommandTransport::new("sh", vec!["-c".into(), "cat >/dev/null; echo 'VOTE yes'".into()]);
        assert_eq!(t.run(b"{}", 5_000).unwrap().trim(), "VOTE yes");
    }
}
