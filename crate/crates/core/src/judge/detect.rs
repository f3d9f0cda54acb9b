use regex::RegexBuilder;
use serde::{Deserialize, Serialize};

use crate::model::{AgentId, EventPayload, Message, MessageKind, Trace};

/// Terms whose meaning depends on the listener's frame of reference.
pub const DEFAULT_AMBIGUOUS_TERMS: [&str; 8] = ["stable", "soon", "ready", "normal", "fine", "handled", "secure", "done"];

const QUALIFIERS: [&str; 7] = ["but", "not", "except", "only", "although", "unless", "until"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnoredRequest {
    /// Position in the scanned message list, or the event index for traces.
    pub index: usize,
    pub step: u32,
    pub from: AgentId,
    pub content: String,
    pub window: u32,
}

fn answers(request: &Message, reply: &Message, window: u32) -> bool {
    reply.kind == MessageKind::Response
        && request.to.contains(&reply.from)
        && reply.to.contains(&request.from)
        && reply.step > request.step
        && reply.step <= request.step.saturating_add(window)
}

fn scan<'a>(messages: impl Iterator<Item = (usize, &'a Message)> + Clone, window: u32) -> Vec<IgnoredRequest> {
    messages
        .clone()
        .filter(|(_, m)| m.kind == MessageKind::Request)
        .filter(|(_, r)| !messages.clone().any(|(_, m)| answers(r, m, window)))
        .map(|(index, r)| IgnoredRequest {
            index,
            step: r.step,
            from: r.from.clone(),
            content: r.content.clone(),
            window,
        })
        .collect()
}

/// Requests with no `Response` from any addressee back to the requester in
/// steps `(s, s + window]`.
pub fn detect_ignored_requests(messages: &[Message], window: u32) -> Vec<IgnoredRequest> {
    scan(messages.iter().enumerate(), window)
}

/// Same as [`detect_ignored_requests`] over a trace's sent messages, indexed by event.
pub fn ignored_requests_in_trace(trace: &Trace, window: u32) -> Vec<IgnoredRequest> {
    let sent = trace.events.iter().enumerate().filter_map(|(i, e)| match &e.payload {
        EventPayload::MessageSent { message } => Some((i, message)),
        _ => None,
    });
    scan(sent, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityFlag {
    pub index: usize,
    pub step: u32,
    pub from: AgentId,
    pub term: String,
    /// The message narrows the term with a qualifying clause.
    pub qualified: bool,
}

/// Whole-word occurrences of `terms` in each message.
pub fn detect_ambiguous_terms(messages: &[Message], terms: &[&str]) -> Vec<AmbiguityFlag> {
    let word = |w: &str| {
        RegexBuilder::new(&format!(r"\b{}\b", regex::escape(w)))
            .case_insensitive(true)
            .build()
            .expect("escaped word compiles")
    };
    let term_res: Vec<_> = terms.iter().map(|t| (t, word(t))).collect();
    let qual_res: Vec<_> = QUALIFIERS.iter().map(|q| word(q)).collect();
    let mut out = Vec::new();
    for (index, m) in messages.iter().enumerate() {
        let qualified = qual_res.iter().any(|q| q.is_match(&m.content));
        for (t, re) in &term_res {
            if re.is_match(&m.content) {
                out.push(AmbiguityFlag {
                    index,
                    step: m.step,
                    from: m.from.clone(),
                    term: t.to_string(),
                    qualified,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(step: u32, from: &str, to: &str, kind: MessageKind, content: &str) -> Message {
        Message {
            step,
            from: AgentId::new(from),
            to: [AgentId::new(to)].into_iter().collect(),
            content: content.into(),
            kind,
            taint: Default::default(),
        }
    }

    #[test]
    fn window_boundaries() {
        let req = msg(2, "a", "b", MessageKind::Request, "status?");
        let answered = vec![req.clone(), msg(3, "b", "a", MessageKind::Response, "ok")];
        assert!(detect_ignored_requests(&answered, 2).is_empty());
        assert_eq!(detect_ignored_requests(std::slice::from_ref(&req), 2).len(), 1);
        let late = vec![req.clone(), msg(5, "b", "a", MessageKind::Response, "ok")];
        assert_eq!(detect_ignored_requests(&late, 2).len(), 1);
        let edge = vec![req, msg(4, "b", "a", MessageKind::Response, "ok")];
        assert!(detect_ignored_requests(&edge, 2).is_empty());
    }

    #[test]
    fn reply_from_a_bystander_does_not_count() {
        let msgs = vec![
            msg(0, "a", "b", MessageKind::Request, "?"),
            msg(1, "c", "a", MessageKind::Response, "ok"),
        ];
        assert_eq!(detect_ignored_requests(&msgs, 2).len(), 1);
    }

    #[test]
    fn ambiguity_flags() {
        let msgs = vec![
            msg(1, "grid", "comms", MessageKind::Statement, "Substation 7 is now stable."),
            msg(2, "grid", "comms", MessageKind::Statement, "Stable for generation but not ready for load."),
            msg(3, "grid", "comms", MessageKind::Statement, "Instability persists."),
        ];
        let f = detect_ambiguous_terms(&msgs, &DEFAULT_AMBIGUOUS_TERMS);
        assert_eq!(f.iter().filter(|f| f.term == "stable").count(), 2);
        assert!(!f[0].qualified);
        assert!(f.iter().filter(|f| f.index == 1).all(|f| f.qualified));
        assert!(f.iter().all(|f| f.index != 2));
    }
}
