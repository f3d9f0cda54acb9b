use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, Judge, JudgeError};
use crate::model::{EventPayload, Message, Trace};

/// Address of one message: the trace file it lives in and its event index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MessageRef {
    pub trace_file: String,
    pub event_index: usize,
}

impl std::fmt::Display for MessageRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.trace_file, self.event_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub reference: MessageRef,
    pub gold: Category,
    pub annotator: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AnnotationRow {
    trace_file: String,
    event_index: usize,
    gold_label: String,
    annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub items: Vec<Annotation>,
}

impl AnnotationSet {
    /// Reads `traceFile,eventIndex,goldLabel,annotatorId` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, JudgeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut items = Vec::new();
        for row in rdr.deserialize::<AnnotationRow>() {
            let row = row?;
            items.push(Annotation {
                reference: MessageRef {
                    trace_file: row.trace_file,
                    event_index: row.event_index,
                },
                gold: row.gold_label.parse()?,
                annotator: row.annotator_id,
            });
        }
        if items.is_empty() {
            return Err(JudgeError::Empty);
        }
        Ok(AnnotationSet { items })
    }

    pub fn from_path(path: &Path) -> Result<Self, JudgeError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn trace_files(&self) -> BTreeSet<&str> {
        self.items.iter().map(|a| a.reference.trace_file.as_str()).collect()
    }
}

/// Traces keyed by the file names used in annotation rows.
#[derive(Debug, Clone, Default)]
pub struct TraceStore {
    traces: BTreeMap<String, Trace>,
}

impl TraceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, trace: Trace) {
        self.traces.insert(name.into(), trace);
    }

    /// Loads every trace the annotation set mentions, relative to `base`.
    pub fn load_for(set: &AnnotationSet, base: &Path) -> Result<Self, JudgeError> {
        let mut store = TraceStore::new();
        for name in set.trace_files() {
            let text = std::fs::read_to_string(base.join(name))?;
            let trace = Trace::from_jsonl(&text).map_err(|e| JudgeError::Unresolvable {
                index: 0,
                reference: format!("{name}: {e}"),
            })?;
            store.insert(name, trace);
        }
        Ok(store)
    }

    pub fn message(&self, r: &MessageRef) -> Option<&Message> {
        let event = self.traces.get(&r.trace_file)?.events.get(r.event_index)?;
        match &event.payload {
            EventPayload::MessageSent { message } => Some(message),
            _ => None,
        }
    }

    pub fn scenario_digests(&self) -> BTreeSet<String> {
        self.traces.values().map(|t| t.header.scenario_digest.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub support: usize,
    /// `None` when the judge never predicted the class.
    pub precision: Option<f64>,
    /// `None` when the class never appears in gold.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub classes: Vec<Category>,
    /// Rows are gold labels, columns are judge labels, both in `classes` order.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassStats>,
    pub kappa: Option<f64>,
    /// Set when chance agreement is 1 and kappa has no value.
    pub kappa_undefined: bool,
    #[serde(default)]
    pub scenario_digests: BTreeSet<String>,
}

impl CalibrationReport {
    /// True when the calibration corpus came from a different scenario
    /// configuration than `digest`.
    pub fn is_stale_for(&self, digest: &str) -> bool {
        !self.scenario_digests.is_empty() && !self.scenario_digests.contains(digest)
    }
}

/// Scores `pred` against `gold` position by position.
pub fn calibrate_labels(pred: &[Category], gold: &[Category]) -> Result<CalibrationReport, JudgeError> {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
    if gold.is_empty() {
        return Err(JudgeError::Empty);
    }
    let classes: Vec<Category> = gold.iter().chain(pred).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&Category, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, g) in pred.iter().zip(gold) {
        confusion[index[g]][index[p]] += 1;
    }
    let n = gold.len();
    let nf = n as f64;
    let diag: usize = (0..k).map(|i| confusion[i][i]).sum();
    let accuracy = diag as f64 / nf;

    let row = |i: usize| confusion[i].iter().sum::<usize>();
    let col = |j: usize| confusion.iter().map(|r| r[j]).sum::<usize>();
    let mut per_class = BTreeMap::new();
    let mut pe = 0.0;
    for (i, c) in classes.iter().enumerate() {
        let (r, cl) = (row(i), col(i));
        pe += (r as f64 / nf) * (cl as f64 / nf);
        per_class.insert(
            c.to_string(),
            ClassStats {
                support: r,
                precision: (cl > 0).then(|| confusion[i][i] as f64 / cl as f64),
                recall: (r > 0).then(|| confusion[i][i] as f64 / r as f64),
            },
        );
    }
    let kappa_undefined = (1.0 - pe).abs() < 1e-12;
    let kappa = (!kappa_undefined).then(|| ((accuracy - pe) / (1.0 - pe)).clamp(-1.0, 1.0));
    Ok(CalibrationReport {
        n,
        classes,
        confusion,
        accuracy,
        per_class,
        kappa,
        kappa_undefined,
        scenario_digests: BTreeSet::new(),
    })
}

/// Runs `judge` over every annotated message and scores it against gold.
pub fn calibrate(judge: &dyn Judge, set: &AnnotationSet, traces: &TraceStore) -> Result<CalibrationReport, JudgeError> {
    if set.items.is_empty() {
        return Err(JudgeError::Empty);
    }
    let mut pred = Vec::with_capacity(set.items.len());
    let mut gold = Vec::with_capacity(set.items.len());
    for (index, a) in set.items.iter().enumerate() {
        let msg = traces.message(&a.reference).ok_or_else(|| JudgeError::Unresolvable {
            index,
            reference: a.reference.to_string(),
        })?;
        pred.push(judge.label(&msg.content).category);
        gold.push(a.gold.clone());
    }
    let mut report = calibrate_labels(&pred, &gold)?;
    report.scenario_digests = traces.scenario_digests();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use Category::*;

    #[test]
    fn perfect_agreement() {
        let g = vec![Agreement, Critique, Agreement, Other];
        let r = calibrate_labels(&g, &g).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.kappa, Some(1.0));
    }

    #[test]
    fn single_class_kappa_is_flagged() {
        let g = vec![Other; 5];
        let r = calibrate_labels(&g, &g).unwrap();
        assert!(r.kappa_undefined);
        assert_eq!(r.kappa, None);
    }

    #[test]
    fn random_labeller_has_no_agreement_beyond_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pick = |b: bool| if b { Agreement } else { Critique };
        let gold: Vec<_> = (0..10_000).map(|_| pick(rng.gen_bool(0.5))).collect();
        let pred: Vec<_> = (0..10_000).map(|_| pick(rng.gen_bool(0.5))).collect();
        let k = calibrate_labels(&pred, &gold).unwrap().kappa.unwrap();
        assert!(k.abs() <= 0.03, "kappa {k}");
    }

    #[test]
    fn ten_percent_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cats = [InfoSharing, Negotiation, Agreement, Critique];
        let pred: Vec<_> = (0..10_000).map(|i| cats[i % 4].clone()).collect();
        let gold: Vec<_> = pred
            .iter()
            .enumerate()
            .map(|(i, c)| if rng.gen_bool(0.1) { cats[(i + 1) % 4].clone() } else { c.clone() })
            .collect();
        let acc = calibrate_labels(&pred, &gold).unwrap().accuracy;
        assert!((acc - 0.90).abs() <= 0.01, "accuracy {acc}");
    }

    #[test]
    fn csv_ingest_and_unresolvable_ref() {
        let text = "traceFile,eventIndex,goldLabel,annotatorId\nt.jsonl,0,agreement,ann1\n";
        let set = AnnotationSet::from_csv(text.as_bytes()).unwrap();
        assert_eq!(set.items[0].gold, Agreement);
        let err = calibrate(&super::super::RuleSet::default(), &set, &TraceStore::new()).unwrap_err();
        assert!(matches!(err, JudgeError::Unresolvable { index: 0, .. }));
        assert!(AnnotationSet::from_csv("traceFile,eventIndex,goldLabel,annotatorId\n".as_bytes()).is_err());
    }

    fn cat_strategy() -> impl Strategy<Value = Category> {
        prop::sample::select(vec![InfoSharing, Negotiation, Agreement, Critique, Other])
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in prop::collection::vec((cat_strategy(), cat_strategy()), 1..200)) {
            let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = calibrate_labels(&pred, &gold).unwrap();
            let total: usize = r.confusion.iter().flatten().sum();
            let diag: usize = (0..r.classes.len()).map(|i| r.confusion[i][i]).sum();
            prop_assert_eq!(total, r.n);
            prop_assert!((r.accuracy - diag as f64 / total as f64).abs() < 1e-12);
            if let Some(k) = r.kappa {
                prop_assert!((-1.0..=1.0).contains(&k));
                if r.accuracy < 1.0 {
                    prop_assert!(k <= r.accuracy + 1e-12);
                }
            }
        }
    }
}
