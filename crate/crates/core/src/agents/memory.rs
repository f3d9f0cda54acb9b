use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::MemoryEntry;

/// Bounded agent memory; evicts oldest-first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    entries: VecDeque<MemoryEntry>,
    capacity: usize,
}

impl AgentMemory {
    pub fn new(capacity: usize) -> Self {
        AgentMemory {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, step: u32, text: impl Into<String>) {
        if self.capacity == 0 {
            return;
        }
        while self.entries.len() >= self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(MemoryEntry {
            step,
            text: text.into(),
        });
    }

    pub fn entries(&self) -> impl DoubleEndedIterator<Item = &MemoryEntry> + ExactSizeIterator {
        self.entries.iter()
    }

    pub fn snapshot(&self) -> Vec<MemoryEntry> {
        self.entries.iter().cloned().collect()
    }

    pub fn last(&self) -> Option<&MemoryEntry> {
        self.entries.back()
    }

    /// Entry texts joined by newlines; empty memory gives the empty string.
    pub fn digest(&self) -> String {
        self.entries
            .iter()
            .map(|e| e.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Keeps the most recent `budget` entries, in order.
pub fn truncate_context(memory: &AgentMemory, budget: usize) -> AgentMemory {
    let skip = memory.entries.len().saturating_sub(budget);
    AgentMemory {
        entries: memory.entries.iter().skip(skip).cloned().collect(),
        capacity: memory.capacity,
    }
}
