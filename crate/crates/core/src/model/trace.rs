use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::canonical::canonical_json;
use super::{Event, EventPayload, Message, ModelError, RunStatus};

/// Leading schema tag of every trace file.
pub const TRACE_SCHEMA: &str = "magrisk-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub scenario_digest: String,
    pub seed: u64,
    /// Free-form provenance (producing command, config digest, engine choices).
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

/// Append-only event log of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceDigest(pub [u8; 32]);

impl fmt::Display for TraceDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Trace {
    pub fn new(scenario_digest: impl Into<String>, seed: u64) -> Self {
        Trace {
            header: TraceHeader {
                schema: TRACE_SCHEMA.to_string(),
                scenario_digest: scenario_digest.into(),
                seed,
                notes: BTreeMap::new(),
            },
            events: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.header.seed
    }

    pub fn is_terminated(&self) -> bool {
        matches!(
            self.events.last().map(|e| &e.payload),
            Some(EventPayload::RunEnded { .. })
        )
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.events.iter().rev().find_map(|e| match e.payload {
            EventPayload::RunEnded { status, .. } => Some(status),
            _ => None,
        })
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.events.iter().filter_map(Event::message)
    }

    /// One canonical JSON record per line: the header first, then events.
    pub fn to_jsonl(&self) -> String {
        let mut out = canonical_json(&self.header).expect("header serialises");
        out.push('\n');
        for e in &self.events {
            out.push_str(&canonical_json(e).expect("events serialise"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, ModelError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(ModelError::EmptyTrace)?;
        let header: TraceHeader = serde_json::from_str(first)
            .map_err(|source| ModelError::TraceLine { line: 1, source })?;
        if header.schema != TRACE_SCHEMA {
            return Err(ModelError::Schema {
                found: header.schema,
                expected: TRACE_SCHEMA.to_string(),
            });
        }
        let events = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| ModelError::TraceLine { line: i + 1, source })
            })
            .collect::<Result<Vec<Event>, _>>()?;
        Ok(Trace { header, events })
    }

    /// SHA-256 over the canonical line-delimited form.
    pub fn digest(&self) -> Result<TraceDigest, ModelError> {
        if !self.is_terminated() {
            return Err(ModelError::Unterminated);
        }
        Ok(TraceDigest(Sha256::digest(self.to_jsonl().as_bytes()).into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ended(seed: u64) -> Trace {
        let mut t = Trace::new("abc", seed);
        t.events.push(Event {
            step: 0,
            seq: 0,
            payload: EventPayload::RunEnded {
                status: RunStatus::HorizonExceeded,
                reason: None,
                success_step: None,
            },
        });
        t
    }

    #[test]
    fn unterminated_trace_has_no_digest() {
        let t = Trace::new("abc", 1);
        assert!(matches!(t.digest(), Err(ModelError::Unterminated)));
    }

    #[test]
    fn empty_ended_trace_hashes_its_canonical_form() {
        let t = ended(1);
        let expected = r#"{"notes":{},"scenario_digest":"abc","schema":"magrisk-trace/1","seed":1}
{"seq":0,"status":"horizon_exceeded","step":0,"type":"run_ended"}
"#;
        assert_eq!(t.to_jsonl(), expected);
        assert_eq!(
            t.digest().unwrap().to_string(),
            super::super::sha256_hex(expected.as_bytes())
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let t = ended(9);
        let back = Trace::from_jsonl(&t.to_jsonl()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_foreign_schema() {
        let text = "{\"schema\":\"other/2\",\"scenario_digest\":\"x\",\"seed\":1}\n";
        assert!(matches!(Trace::from_jsonl(text), Err(ModelError::Schema { .. })));
    }
}
