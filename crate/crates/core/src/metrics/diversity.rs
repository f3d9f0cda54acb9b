use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::model::{AgentId, EventPayload, Trace};

/// Text to fixed-length vector.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Bag of lowercase alphanumeric tokens, hashed (FNV-1a) into `dim` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: 4096 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let tok = tok.to_lowercase();
            v[(fnv1a(tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseItem {
    pub agent: AgentId,
    pub content: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponseSet {
    pub items: Vec<ResponseItem>,
}

impl ResponseSet {
    pub fn embed<'a>(embedder: &dyn Embedder, texts: impl IntoIterator<Item = (AgentId, &'a str)>) -> Self {
        ResponseSet {
            items: texts
                .into_iter()
                .map(|(agent, t)| ResponseItem {
                    agent,
                    content: t.to_string(),
                    vector: embedder.embed(t),
                })
                .collect(),
        }
    }

    /// Each agent's last sent message, in first-speaker order.
    pub fn final_messages(trace: &Trace, embedder: &dyn Embedder) -> Self {
        let mut order: Vec<AgentId> = Vec::new();
        let mut last: std::collections::BTreeMap<AgentId, &str> = Default::default();
        for e in &trace.events {
            if let EventPayload::MessageSent { message } = &e.payload {
                if !last.contains_key(&message.from) {
                    order.push(message.from.clone());
                }
                last.insert(message.from.clone(), &message.content);
            }
        }
        Self::embed(embedder, order.into_iter().map(|a| {
            let t = last[&a];
            (a, t)
        }))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn check(&self, min: usize) -> Result<(), MetricError> {
        if self.items.len() < min {
            return Err(MetricError::TooFew { need: min, got: self.items.len() });
        }
        let dim = self.items[0].vector.len();
        for (i, it) in self.items.iter().enumerate() {
            if it.vector.len() != dim {
                return Err(MetricError::DimensionMismatch { index: i, expected: dim, found: it.vector.len() });
            }
            if it.vector.iter().all(|x| *x == 0.0) {
                return Err(MetricError::ZeroVector(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub values: Vec<Vec<f64>>,
    pub mean_off_diagonal: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    // sqrt(x*x) == x exactly, so identical vectors score exactly 1.
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine similarity of every pair. Needs at least two non-zero vectors.
pub fn pairwise_similarity(rs: &ResponseSet) -> Result<SimilarityMatrix, MetricError> {
    rs.check(2)?;
    let n = rs.len();
    let mut values = vec![vec![1.0; n]; n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine(&rs.items[i].vector, &rs.items[j].vector);
            values[i][j] = s;
            values[j][i] = s;
            sum += 2.0 * s;
        }
    }
    Ok(SimilarityMatrix {
        values,
        mean_off_diagonal: sum / (n * (n - 1)) as f64,
    })
}

/// Single-link cluster id per item: items joined by any chain of pairs with
/// similarity >= `threshold` share an id. Ids are dense, in first-seen order.
pub fn cluster(rs: &ResponseSet, threshold: f64) -> Result<Vec<usize>, MetricError> {
    rs.check(1)?;
    let n = rs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&rs.items[i].vector, &rs.items[j].vector) >= threshold {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut ids = std::collections::BTreeMap::new();
    Ok((0..n)
        .map(|i| {
            let r = root(&mut parent, i);
            let next = ids.len();
            *ids.entry(r).or_insert(next)
        })
        .collect())
}

/// Shannon entropy in bits of the cluster-size distribution.
pub fn response_entropy(rs: &ResponseSet, threshold: f64) -> Result<f64, MetricError> {
    let ids = cluster(rs, threshold)?;
    let k = ids.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for i in ids {
        counts[i] += 1;
    }
    Ok(entropy_of_counts(&counts))
}

pub(crate) fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let h = -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

/// Fraction of unordered pairs holding different stances. Zero for fewer
/// than two agents.
pub fn disagreement_rate<T: PartialEq>(stances: &[T]) -> f64 {
    let n = stances.len();
    if n < 2 {
        return 0.0;
    }
    let mut diff = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if stances[i] != stances[j] {
                diff += 1;
            }
        }
    }
    diff as f64 / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(texts: &[&str]) -> ResponseSet {
        ResponseSet::embed(
            &HashingEmbedder::default(),
            texts.iter().enumerate().map(|(i, t)| (AgentId::new(format!("a{i}")), *t)),
        )
    }

    fn vecs(vs: Vec<Vec<f64>>) -> ResponseSet {
        ResponseSet {
            items: vs
                .into_iter()
                .enumerate()
                .map(|(i, v)| ResponseItem { agent: AgentId::new(format!("a{i}")), content: String::new(), vector: v })
                .collect(),
        }
    }

    #[test]
    fn identical_and_orthogonal() {
        let m = pairwise_similarity(&set(&["same text", "same text", "same text"])).unwrap();
        assert!(m.values.iter().flatten().all(|&x| x == 1.0));
        let o = pairwise_similarity(&vecs(vec![vec![1.0, 0.0], vec![0.0, 2.0]])).unwrap();
        assert_eq!(o.values[0][1], 0.0);
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(matches!(pairwise_similarity(&set(&["x", "!!!"])), Err(MetricError::ZeroVector(1))));
    }

    #[test]
    fn entropy_examples() {
        let e = |v: Vec<Vec<f64>>| response_entropy(&vecs(v), 0.95).unwrap();
        assert_eq!(e(vec![vec![1.0, 0.0]; 4]), 0.0);
        let basis = |i: usize| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        assert!((e((0..4).map(basis).collect()) - 2.0).abs() < 1e-12);
        assert!((e(vec![basis(0), basis(0), basis(1), basis(1)]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_link_is_transitive() {
        // a~b and b~c but not a~c: one cluster.
        let v = vecs(vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(cluster(&v, 0.7).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement_rate(&["a", "a", "a"]), 0.0);
        assert_eq!(disagreement_rate(&["a", "b", "c"]), 1.0);
        assert!((disagreement_rate(&["a", "a", "b"]) - 2.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn similarity_invariants(raw in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..8)) {
            let mut raw = raw;
            for v in &mut raw { v[0] += 11.0; }
            let rs = vecs(raw);
            let m = pairwise_similarity(&rs).unwrap();
            for i in 0..rs.len() {
                prop_assert_eq!(m.values[i][i], 1.0);
                for j in 0..rs.len() {
                    prop_assert_eq!(m.values[i][j], m.values[j][i]);
                    prop_assert!((-1.0..=1.0).contains(&m.values[i][j]));
                }
            }
        }

        #[test]
        fn entropy_bounds(raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..12), t in 0.0f64..1.0) {
            let mut raw = raw;
            for v in &mut raw { v[2] += 0.01; }
            let rs = vecs(raw);
            let h = response_entropy(&rs, t).unwrap();
            let ids = cluster(&rs, t).unwrap();
            prop_assert!(h >= 0.0 && h <= (rs.len() as f64).log2() + 1e-12);
            prop_assert_eq!(h == 0.0, ids.iter().all(|&i| i == 0));
        }
    }
}
