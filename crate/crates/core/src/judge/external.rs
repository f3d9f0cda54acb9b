use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Category, Judge, JudgeError, UtteranceLabel};
use crate::agents::{CommandTransport, TransportError};

pub const ENDPOINT_VAR: &str = "MAGRISK_JUDGE_ENDPOINT";
pub const KEY_VAR: &str = "MAGRISK_JUDGE_KEY";

/// Five-dimension planning rubric for a model-backed judge, each scored 1 to 5.
pub const PLANNING_RUBRIC: &str = "\
Score the team's planning on each dimension from 1 (poor) to 5 (excellent).
Reply with one line per dimension in the form `<dimension>: <score>`.
task_assignment: are tasks handed out explicitly, with nothing left unowned?
role_definition: does each agent know what it is responsible for?
workload_fit: does the split of work match what each agent is able to do?
outcome: did the plan reach the stated goal?
coordination: were dependencies between agents sequenced and tracked?
";

pub const RUBRIC_DIMENSIONS: [&str; 5] = ["task_assignment", "role_definition", "workload_fit", "outcome", "coordination"];

/// Parses rubric replies. Lines naming unknown dimensions or out-of-range
/// scores are skipped; missing dimensions are simply absent.
pub fn parse_rubric_scores(reply: &str) -> BTreeMap<String, u8> {
    let mut out = BTreeMap::new();
    for line in reply.lines() {
        let Some((dim, score)) = line.split_once(':') else { continue };
        let dim = dim.trim().trim_matches('`').to_ascii_lowercase();
        if !RUBRIC_DIMENSIONS.contains(&dim.as_str()) {
            continue;
        }
        if let Ok(s) = score.trim().parse::<u8>() {
            if (1..=5).contains(&s) {
                out.insert(dim, s);
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct JudgeRequest<'a> {
    content: &'a str,
    categories: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct JudgeReply {
    category: String,
    #[serde(default = "one")]
    confidence: f64,
}

fn one() -> f64 {
    1.0
}

/// Raw request/response channel to an external classifier.
pub trait JudgeTransport: Send + Sync {
    fn ask(&self, request: &str, timeout_ms: u64) -> Result<String, TransportError>;
}

impl JudgeTransport for CommandTransport {
    fn ask(&self, request: &str, timeout_ms: u64) -> Result<String, TransportError> {
        self.run(request.as_bytes(), timeout_ms)
    }
}

/// Adapter over an external classifier. Replies are cached by content hash;
/// failures are never cached and come back as `Other` with confidence 0.
pub struct ExternalJudge {
    transport: Arc<dyn JudgeTransport>,
    timeout_ms: u64,
    cache: RwLock<BTreeMap<String, UtteranceLabel>>,
}

impl std::fmt::Debug for ExternalJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalJudge")
            .field("timeout_ms", &self.timeout_ms)
            .field("cached", &self.cache_len())
            .finish()
    }
}

fn content_key(content: &str) -> String {
    hex::encode(Sha256::digest(content.as_bytes()))
}

impl ExternalJudge {
    pub fn new(transport: Arc<dyn JudgeTransport>) -> Self {
        ExternalJudge {
            transport,
            timeout_ms: 30_000,
            cache: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    /// Command adapter from `MAGRISK_JUDGE_ENDPOINT` (a whitespace-split
    /// command line). `MAGRISK_JUDGE_KEY`, when set, is passed to the child's
    /// environment. `None` when no endpoint is configured.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENDPOINT_VAR).ok()?;
        let argv: Vec<String> = endpoint.split_whitespace().map(String::from).collect();
        let mut transport = CommandTransport::from_argv(&argv)?;
        if let Ok(key) = std::env::var(KEY_VAR) {
            transport = transport.with_env(KEY_VAR, key);
        }
        Some(ExternalJudge::new(Arc::new(transport)))
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    pub fn save_cache(&self, path: &Path) -> Result<(), JudgeError> {
        let cache = self.cache.read().expect("judge cache poisoned");
        let text = serde_json::to_string_pretty(&*cache).map_err(std::io::Error::other)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_cache(&self, path: &Path) -> Result<usize, JudgeError> {
        let text = std::fs::read_to_string(path)?;
        let loaded: BTreeMap<String, UtteranceLabel> =
            serde_json::from_str(&text).map_err(std::io::Error::other)?;
        let n = loaded.len();
        self.cache.write().expect("judge cache poisoned").extend(loaded);
        Ok(n)
    }

    /// Sends the planning rubric with `transcript` and parses the scores.
    pub fn score_planning(&self, transcript: &str) -> Result<BTreeMap<String, u8>, TransportError> {
        let request = serde_json::json!({ "rubric": PLANNING_RUBRIC, "transcript": transcript }).to_string();
        self.transport.ask(&request, self.timeout_ms).map(|r| parse_rubric_scores(&r))
    }

    fn fetch(&self, content: &str) -> Result<UtteranceLabel, String> {
        let request = serde_json::to_string(&JudgeRequest {
            content,
            categories: Category::BUILTIN.iter().map(|c| c.to_string()).collect(),
        })
        .expect("request serialises");
        let reply = self.transport.ask(&request, self.timeout_ms).map_err(|e| e.to_string())?;
        let reply = reply.trim();
        let parsed = match serde_json::from_str::<JudgeReply>(reply) {
            Ok(r) => r,
            Err(_) if !reply.is_empty() && !reply.contains(char::is_whitespace) => JudgeReply {
                category: reply.to_string(),
                confidence: 1.0,
            },
            Err(e) => return Err(format!("unparseable reply: {e}")),
        };
        if !(0.0..=1.0).contains(&parsed.confidence) {
            return Err(format!("confidence {} outside [0,1]", parsed.confidence));
        }
        Ok(UtteranceLabel {
            category: Category::from(parsed.category),
            confidence: parsed.confidence,
            note: None,
        })
    }
}

impl Judge for ExternalJudge {
    fn label(&self, content: &str) -> UtteranceLabel {
        let key = content_key(content);
        if let Some(hit) = self.cache.read().expect("judge cache poisoned").get(&key) {
            return hit.clone();
        }
        match self.fetch(content) {
            Ok(label) => {
                self.cache
                    .write()
                    .expect("judge cache poisoned")
                    .entry(key)
                    .or_insert(label)
                    .clone()
            }
            Err(note) => UtteranceLabel {
                category: Category::Other,
                confidence: 0.0,
                note: Some(format!("judge error: {note}")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        calls: AtomicUsize,
        reply: Result<&'static str, ()>,
    }

    impl JudgeTransport for Counting {
        fn ask(&self, _request: &str, timeout_ms: u64) -> Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.reply.map(String::from).map_err(|_| TransportError::Timeout(timeout_ms))
        }
    }

    #[test]
    fn replies_are_cached_by_content() {
        let t = Arc::new(Counting {
            calls: AtomicUsize::new(0),
            reply: Ok(r#"{"category":"critique","confidence":0.8}"#),
        });
        let j = ExternalJudge::new(t.clone());
        let a = j.label("however...");
        let b = j.label("however...");
        assert_eq!(a, b);
        assert_eq!(a.category, Category::Critique);
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
        j.label("something else");
        assert_eq!(t.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn failures_become_other_and_are_retried() {
        let t = Arc::new(Counting {
            calls: AtomicUsize::new(0),
            reply: Err(()),
        });
        let j = ExternalJudge::new(t.clone());
        let l = j.label("x");
        assert_eq!(l.category, Category::Other);
        assert_eq!(l.confidence, 0.0);
        assert!(l.note.unwrap().contains("judge error"));
        j.label("x");
        assert_eq!(t.calls.load(Ordering::SeqCst), 2);
        assert_eq!(j.cache_len(), 0);
    }

    #[test]
    fn bare_category_reply() {
        let t = Arc::new(Counting {
            calls: AtomicUsize::new(0),
            reply: Ok("agreement\n"),
        });
        assert_eq!(ExternalJudge::new(t).label("ok").category, Category::Agreement);
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let t = Arc::new(Counting {
            calls: AtomicUsize::new(0),
            reply: Ok("negotiation"),
        });
        let j = ExternalJudge::new(t.clone());
        j.label("offer 5");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        j.save_cache(&path).unwrap();
        let fresh = ExternalJudge::new(t.clone());
        assert_eq!(fresh.load_cache(&path).unwrap(), 1);
        fresh.label("offer 5");
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn rubric_parsing() {
        let s = parse_rubric_scores("task_assignment: 4\nrole_definition: 9\nvibes: 3\n`outcome`: 2");
        assert_eq!(s.len(), 2);
        assert_eq!(s["outcome"], 2);
    }
}
