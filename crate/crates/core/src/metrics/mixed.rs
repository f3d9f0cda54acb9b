use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::model::Outcome;

/// Finite set of labelled outcomes, one utility per agent each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    outcomes: Vec<Outcome>,
}

impl OutcomeSpace {
    pub fn new(outcomes: Vec<Outcome>) -> Result<Self, MetricError> {
        if outcomes.is_empty() {
            return Err(MetricError::TooFew { need: 1, got: 0 });
        }
        let dim = outcomes[0].utilities.len();
        for (i, o) in outcomes.iter().enumerate() {
            if o.utilities.len() != dim {
                return Err(MetricError::DimensionMismatch { index: i, expected: dim, found: o.utilities.len() });
            }
            if o.utilities.iter().any(|u| !u.is_finite()) {
                return Err(MetricError::NonFinite(o.label.clone()));
            }
        }
        Ok(OutcomeSpace { outcomes })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn find(&self, label: &str) -> Result<&Outcome, MetricError> {
        self.outcomes
            .iter()
            .find(|o| o.label == label)
            .ok_or_else(|| MetricError::UnknownOutcome(label.into()))
    }
}

/// `a` is at least as good for everyone and strictly better for someone.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Indices of non-dominated outcomes, ascending.
///
/// Candidates are visited in decreasing (sum, lexicographic) order, which
/// puts every dominator before what it dominates, so each point is only
/// checked against the frontier found so far.
pub fn pareto_frontier(space: &OutcomeSpace) -> Vec<usize> {
    let os = &space.outcomes;
    let sums: Vec<f64> = os.iter().map(|o| o.utilities.iter().sum()).collect();
    let mut order: Vec<usize> = (0..os.len()).collect();
    order.sort_by(|&i, &j| {
        sums[j]
            .partial_cmp(&sums[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| os[j].utilities.partial_cmp(&os[i].utilities).unwrap_or(Ordering::Equal))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&os[f].utilities, &os[i].utilities)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

pub fn frontier_labels(space: &OutcomeSpace) -> Vec<String> {
    pareto_frontier(space).into_iter().map(|i| space.outcomes[i].label.clone()).collect()
}

pub fn is_pareto_optimal(space: &OutcomeSpace, label: &str) -> Result<bool, MetricError> {
    let o = space.find(label)?;
    Ok(!space.outcomes.iter().any(|p| dominates(&p.utilities, &o.utilities)))
}

/// Position of the achieved collective utility between the space's worst and
/// best collective outcomes.
pub fn cooperation_index(achieved: &[f64], space: &OutcomeSpace) -> Result<f64, MetricError> {
    let sums = space.outcomes.iter().map(|o| o.utilities.iter().sum::<f64>());
    let (lo, hi) = sums.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s), h.max(s)));
    if hi <= lo {
        return Err(MetricError::DegenerateSpace);
    }
    let a: f64 = achieved.iter().sum();
    Ok(((a - lo) / (hi - lo)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvoChoice {
    /// `(self payoff, other payoff)` per option.
    pub options: Vec<(f64, f64)>,
    pub chosen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvoClass {
    Competitive,
    Individualistic,
    Prosocial,
    Altruistic,
}

/// Angle cut points in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvoBounds {
    pub individualistic: f64,
    pub prosocial: f64,
    pub altruistic: f64,
}

impl Default for SvoBounds {
    fn default() -> Self {
        SvoBounds {
            individualistic: -12.5,
            prosocial: 22.5,
            altruistic: 57.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvoResult {
    pub class: SvoClass,
    pub angle: f64,
}

pub fn svo_classify(choices: &[SvoChoice], bounds: SvoBounds) -> Result<SvoResult, MetricError> {
    if choices.is_empty() {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    let (mut s, mut o) = (0.0, 0.0);
    for (i, c) in choices.iter().enumerate() {
        let &(ps, po) = c.options.get(c.chosen).ok_or(MetricError::BadChoice(i))?;
        s += ps;
        o += po;
    }
    let n = choices.len() as f64;
    let angle = (o / n).atan2(s / n).to_degrees();
    let class = if angle >= bounds.altruistic {
        SvoClass::Altruistic
    } else if angle >= bounds.prosocial {
        SvoClass::Prosocial
    } else if angle >= bounds.individualistic {
        SvoClass::Individualistic
    } else {
        SvoClass::Competitive
    };
    Ok(SvoResult { class, angle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(us: &[&[f64]]) -> OutcomeSpace {
        OutcomeSpace::new(
            us.iter()
                .enumerate()
                .map(|(i, u)| Outcome { label: format!("o{i}"), utilities: u.to_vec() })
                .collect(),
        )
        .unwrap()
    }

    fn brute(space: &OutcomeSpace) -> Vec<usize> {
        let os = space.outcomes();
        (0..os.len())
            .filter(|&i| !(0..os.len()).any(|j| dominates(&os[j].utilities, &os[i].utilities)))
            .collect()
    }

    #[test]
    fn frontier_examples() {
        assert_eq!(pareto_frontier(&space(&[&[1.0, 1.0]])), vec![0]);
        assert_eq!(pareto_frontier(&space(&[&[1.0, 1.0], &[2.0, 2.0]])), vec![1]);
        let s = space(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(pareto_frontier(&s), vec![0, 1]);
        assert!(is_pareto_optimal(&s, "o0").unwrap());
        assert!(is_pareto_optimal(&s, "nope").is_err());
    }

    #[test]
    fn cooperation_examples() {
        let s = space(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert_eq!(cooperation_index(&[2.0, 2.0], &s).unwrap(), 1.0);
        assert_eq!(cooperation_index(&[0.0, 0.0], &s).unwrap(), 0.0);
        assert_eq!(cooperation_index(&[1.0, 1.0], &s).unwrap(), 0.5);
        assert!(cooperation_index(&[1.0], &space(&[&[1.0], &[1.0]])).is_err());
    }

    #[test]
    fn svo_examples() {
        let pick = |opts: Vec<(f64, f64)>, chosen| SvoChoice { options: opts, chosen };
        let ind = svo_classify(&[pick(vec![(10.0, 0.0), (5.0, 5.0)], 0)], SvoBounds::default()).unwrap();
        assert_eq!((ind.class, ind.angle), (SvoClass::Individualistic, 0.0));
        let pro = svo_classify(&[pick(vec![(10.0, 0.0), (5.0, 5.0)], 1)], SvoBounds::default()).unwrap();
        assert_eq!(pro.class, SvoClass::Prosocial);
        assert!((pro.angle - 45.0).abs() < 1e-9);
        let comp = svo_classify(&[pick(vec![(5.0, -5.0), (5.0, 5.0)], 0)], SvoBounds::default()).unwrap();
        assert!(comp.angle < 0.0);
        assert_eq!(comp.class, SvoClass::Competitive);
        assert!(svo_classify(&[pick(vec![(1.0, 1.0)], 3)], SvoBounds::default()).is_err());
    }

    fn arb_space() -> impl Strategy<Value = OutcomeSpace> {
        (1usize..=5).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(0u8..6, k), 1..60).prop_map(|rows| {
                OutcomeSpace::new(
                    rows.into_iter()
                        .enumerate()
                        .map(|(i, r)| Outcome { label: format!("o{i}"), utilities: r.into_iter().map(f64::from).collect() })
                        .collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn frontier_matches_brute_force(s in arb_space()) {
            prop_assert_eq!(pareto_frontier(&s), brute(&s));
        }

        #[test]
        fn cooperation_is_affine_invariant(s in arb_space(), a in 0.1f64..10.0, b in -5.0f64..5.0, pick in 0usize..60) {
            let achieved = s.outcomes()[pick % s.outcomes().len()].utilities.clone();
            if let Ok(c) = cooperation_index(&achieved, &s) {
                let t = |v: &[f64]| v.iter().map(|x| a * x + b).collect::<Vec<_>>();
                let scaled = OutcomeSpace::new(s.outcomes().iter().map(|o| Outcome { label: o.label.clone(), utilities: t(&o.utilities) }).collect()).unwrap();
                let c2 = cooperation_index(&t(&achieved), &scaled).unwrap();
                prop_assert!((c - c2).abs() < 1e-9);
            }
        }
    }
}
