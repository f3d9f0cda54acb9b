//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion does.
//!
//! Run with `cargo test -p magrisk --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use magrisk::agents::{BehaviorSpec, CapabilityTable, TableSpec};
use magrisk::baselines::{run_baseline, run_task_suite, BaselineKind, SuiteStage, SuiteTask, TaskSuite};
use magrisk::engine::{replay, run_ensemble, run_once, seeds_from, EngineOptions};
use magrisk::judge::{calibrate_labels, Category, Judge, RuleSet};
use magrisk::metrics::{
    abandonment_rate, apply_safety_factor, conformity_trials, dominates, pairwise_similarity, pareto_frontier,
    response_entropy, tom_score, OutcomeSpace, ResponseItem, ResponseSet,
};
use magrisk::model::{AgentId, EventPayload, Outcome, ScenarioSpec, Trace};
use magrisk::scenarios::{self, conformity_variant};

type Verdict = Result<String, String>;

fn spec_from(v: Value) -> ScenarioSpec {
    let mut s: ScenarioSpec = serde_json::from_value(v).expect("spec literal");
    s.normalize();
    s
}

fn within(name: &str, observed: f64, target: f64, tol: f64) -> Result<String, String> {
    let msg = format!("{name} {observed:.4} (target {target} +/- {tol})");
    if (observed - target).abs() <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn timed(limit: Duration, start: Instant, detail: String) -> Verdict {
    let took = start.elapsed();
    if took < limit {
        Ok(format!("{detail}; {:.1}s", took.as_secs_f64()))
    } else {
        Err(format!("{detail}; took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
    }
}

fn determinism() -> Verdict {
    let start = Instant::now();
    let opts = EngineOptions::default();
    let mut pool: Vec<ScenarioSpec> = scenarios::all().into_iter().map(|p| p.spec).collect();
    pool.extend((1..=5).map(conformity_variant));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let spec = pool.choose(&mut rng).unwrap();
        let seed: u64 = rng.gen();
        let a = run_once(spec, seed, &opts).map_err(|e| e.to_string())?;
        let b = run_once(spec, seed, &opts).map_err(|e| e.to_string())?;
        let parsed = Trace::from_jsonl(&a.trace.to_jsonl()).map_err(|e| e.to_string())?;
        let c = replay(&parsed, spec, &opts).map_err(|e| e.to_string())?;
        let d = [&a, &b, &c].map(|r| r.trace.digest().unwrap().to_string());
        if d[0] != d[1] || d[0] != d[2] {
            return Err(format!("pair {i} ({}, seed {seed}) digests differ", spec.name));
        }
    }
    timed(Duration::from_secs(60), start, "100 (spec, seed) pairs replay identically".into())
}

fn golden_scenarios() -> Verdict {
    let opts = EngineOptions::default();
    let mut failed = Vec::new();
    for p in scenarios::all() {
        let r = p.verify(&opts).map_err(|e| e.to_string())?;
        for c in r.failures() {
            failed.push(format!("{}:{} expected {} got {}", p.name(), c.name, c.expected, c.observed));
        }
    }
    if failed.is_empty() {
        Ok("6 packages match oracles and golden digests".into())
    } else {
        Err(failed.join("; "))
    }
}

fn brute_frontier(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !(0..points.len()).any(|j| j != i && dominates(&points[j], &points[i])))
        .collect()
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for inst in 0..1000 {
        let n = rng.gen_range(1..=200);
        let agents = rng.gen_range(1..=5);
        // Coarse grid so ties and duplicates are common.
        let levels = if inst % 2 == 0 { 5 } else { 1000 };
        let points: Vec<Vec<f64>> =
            (0..n).map(|_| (0..agents).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect()).collect();
        let space = OutcomeSpace::new(
            points
                .iter()
                .enumerate()
                .map(|(i, u)| Outcome { label: format!("o{i}"), utilities: u.clone() })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        if pareto_frontier(&space) != brute_frontier(&points) {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} frontier mismatches in 1000 instances"));
    }

    // Orthogonal cluster vectors: entropy is that of the cluster sizes.
    let mut worst_h: f64 = 0.0;
    for sizes in [vec![5], vec![1, 1], vec![2, 3], vec![1, 2, 3, 4], vec![7, 1, 1, 1], vec![1; 8]] {
        let dim = sizes.len();
        let mut items = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            for k in 0..s {
                let mut v = vec![0.0; dim];
                v[c] = 1.0 + k as f64;
                items.push(ResponseItem { agent: AgentId::from(format!("a{c}-{k}")), content: String::new(), vector: v });
            }
        }
        let n: usize = sizes.iter().sum();
        let hand: f64 = sizes.iter().map(|&s| s as f64 / n as f64).map(|p| -p * p.log2()).sum();
        let h = response_entropy(&ResponseSet { items }, 0.9).map_err(|e| e.to_string())?;
        worst_h = worst_h.max((h - hand).abs());
    }
    if worst_h > 1e-9 {
        return Err(format!("entropy off by {worst_h:e}"));
    }

    let mut worst_cos: f64 = 0.0;
    for _ in 0..200 {
        let (n, dim) = (rng.gen_range(2..12), rng.gen_range(1..40));
        let items: Vec<ResponseItem> = (0..n)
            .map(|i| ResponseItem {
                agent: AgentId::from(format!("a{i}")),
                content: String::new(),
                vector: (0..dim).map(|_| rng.gen_range(0.01..1.0)).collect(),
            })
            .collect();
        let m = pairwise_similarity(&ResponseSet { items: items.clone() }).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (&items[i].vector, &items[j].vector);
                let mut dot = 0.0;
                let (mut na, mut nb) = (0.0, 0.0);
                for k in 0..dim {
                    dot += a[k] * b[k];
                    na += a[k] * a[k];
                    nb += b[k] * b[k];
                }
                worst_cos = worst_cos.max((m.values[i][j] - dot / (na.sqrt() * nb.sqrt())).abs());
            }
        }
    }
    if worst_cos > 1e-9 {
        return Err(format!("cosine off by {worst_cos:e}"));
    }
    Ok(format!("0/1000 frontier mismatches; entropy err {worst_h:.1e}; cosine err {worst_cos:.1e}"))
}

fn sycophant_convergence() -> Verdict {
    let start = Instant::now();
    let mut spec = conformity_variant(5);
    let analyst = spec.agents.iter_mut().find(|a| a.id.as_str() == "analyst").unwrap();
    if let BehaviorSpec::Sycophant(s) = &mut analyst.behavior {
        s.switch_probability = 0.3;
    }
    let map = magrisk::engine::run_ensemble_map(&spec, &seeds_from(0, 10_000), &EngineOptions::default(), |r| {
        r.map(|r| conformity_trials(&r.trace, "trade-shows"))
    })
    .map_err(|e| e.to_string())?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| e.to_string())?;
    let trials: Vec<_> = map.into_iter().flatten().filter(|t| t.agent.as_str() == "analyst").collect();
    let rate = abandonment_rate(&trials).rate.ok_or("no initially-correct trials")?;
    within("abandonment", rate, 0.30, 0.02).and_then(|m| timed(Duration::from_secs(120), start, m))
}

fn tom_convergence() -> Verdict {
    let start = Instant::now();
    let k = 4;
    let choices: Vec<String> = (0..k).map(|i| format!("move-{i}")).collect();
    let spec = spec_from(json!({
        "name": "uniform-tom",
        "topology": {"kind": "swarm"},
        "agents": [
            {"id": "guesser", "behavior": {"kind": "scripted", "rules": [
                {"then": [{"do": "predict", "target": "target", "choices": choices}]}]}},
            {"id": "target", "behavior": {"kind": "scripted", "rules": [
                {"then": [{"do": "act", "label": "move-2"}]}]}}
        ],
        "protocol": {"rounds": 10},
        "horizon": 10
    }));
    let per_run = magrisk::engine::run_ensemble_map(&spec, &seeds_from(0, 1000), &EngineOptions::default(), |r| {
        r.map(|r| {
            let s = &tom_score(&r.trace).per_agent[&AgentId::from("guesser")];
            (s.resolved, s.correct)
        })
    })
    .map_err(|e| e.to_string())?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| e.to_string())?;
    let (resolved, correct) = per_run.iter().fold((0, 0), |(a, b), (r, c)| (a + r, b + c));
    let acc = correct as f64 / resolved as f64;
    within(&format!("tom accuracy over {resolved}"), acc, 1.0 / k as f64, 0.02)
        .and_then(|m| timed(Duration::from_secs(120), start, m))
}

fn capability_convergence() -> Verdict {
    let start = Instant::now();
    let rates = [("parse", 0.2), ("plan", 0.5), ("price", 0.9)];
    let suite = TaskSuite {
        tasks: rates
            .iter()
            .map(|(c, _)| SuiteTask { task_tag: format!("{c}-1"), input: "x".into(), expected: " ok: ".into(), capability: c.to_string() })
            .collect(),
        stage: SuiteStage::Baseline,
    };
    let n = 2000;
    let behavior = BehaviorSpec::TableStochastic(TableSpec::new(CapabilityTable::from_pairs(rates.iter().copied())));
    let r = run_task_suite(&suite, &behavior, n, 0, &BTreeSet::new(), &EngineOptions::default()).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for (c, p) in rates {
        let got = r.per_capability[c].rate;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let line = format!("{c} {got:.3} vs {p} (3σ {:.3})", 3.0 * sigma);
        if (got - p).abs() > 3.0 * sigma {
            return Err(line);
        }
        detail.push(line);
    }
    timed(Duration::from_secs(120), start, detail.join(", "))
}

fn statistical_convergence() -> Verdict {
    let parts = [sycophant_convergence(), tom_convergence(), capability_convergence()];
    let joined = parts.iter().map(|p| p.clone().unwrap_or_else(|e| format!("FAILED {e}"))).collect::<Vec<_>>().join(" | ");
    if parts.iter().all(Result::is_ok) {
        Ok(joined)
    } else {
        Err(joined)
    }
}

/// Judge labels for every message in the shipped scenarios over a few seeds.
fn corpus(judge: &RuleSet) -> Vec<Category> {
    let opts = EngineOptions::default();
    let mut out = Vec::new();
    for p in scenarios::all() {
        for seed in 0..300 {
            let run = run_once(&p.spec, seed, &opts).unwrap();
            out.extend(run.trace.messages().map(|m| judge.label(&m.content).category));
        }
    }
    out
}

fn judge_calibration() -> Verdict {
    let judge = RuleSet::default();
    let pred = corpus(&judge);
    let classes: Vec<Category> = pred.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err("corpus has a single category".into());
    }
    let own = calibrate_labels(&pred, &pred).map_err(|e| e.to_string())?;
    if own.accuracy != 1.0 || own.kappa != Some(1.0) {
        return Err(format!("self-labelled accuracy {} kappa {:?}", own.accuracy, own.kappa));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let flipped: Vec<Category> = pred
        .iter()
        .map(|c| {
            if rng.gen_bool(0.1) {
                classes.iter().filter(|o| *o != c).collect::<Vec<_>>().choose(&mut rng).map(|o| (*o).clone()).unwrap()
            } else {
                c.clone()
            }
        })
        .collect();
    let f = calibrate_labels(&pred, &flipped).map_err(|e| e.to_string())?;
    let random: Vec<Category> = pred.iter().map(|_| classes.choose(&mut rng).unwrap().clone()).collect();
    let r = calibrate_labels(&pred, &random).map_err(|e| e.to_string())?;
    let kappa = r.kappa.ok_or("random kappa undefined")?;
    let a = within("flipped accuracy", f.accuracy, 0.90, 0.01);
    let b = within("random kappa", kappa, 0.0, 0.03);
    let detail = format!(
        "n={}, self acc 1 kappa 1; {}; {}",
        pred.len(),
        a.clone().unwrap_or_else(|e| e),
        b.clone().unwrap_or_else(|e| e)
    );
    if a.is_ok() && b.is_ok() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn injection_identity() -> Verdict {
    let opts = EngineOptions::default();
    for p in scenarios::all() {
        let base = p.spec.without_injections();
        // Same scenario with the empty list spelled out.
        let mut v = serde_json::to_value(&base).unwrap();
        v["injections"] = json!([]);
        let explicit = spec_from(v);
        for seed in 0..50 {
            let a = run_once(&base, seed, &opts).map_err(|e| e.to_string())?.trace.to_jsonl();
            let b = run_once(&explicit, seed, &opts).map_err(|e| e.to_string())?.trace.to_jsonl();
            if a != b {
                return Err(format!("{} seed {seed}: traces differ", p.name()));
            }
        }
    }

    let p = scenarios::load_scenario("power-grid-ambiguity").map_err(|e| e.to_string())?;
    let mut v = serde_json::to_value(p.spec.without_injections()).unwrap();
    v["injections"] = json!([{"label": "cut", "trigger": {"at_step": 0},
        "action": {"type": "drop_channel", "from": "grid", "to": "comms", "duration": p.spec.horizon}}]);
    let cut = spec_from(v);
    let (grid, comms) = (AgentId::from("grid"), AgentId::from("comms"));
    let (mut delivered, mut dropped) = (0, 0);
    for seed in 0..50 {
        for e in run_once(&cut, seed, &opts).map_err(|e| e.to_string())?.trace.events {
            match e.payload {
                EventPayload::MessageSent { message } if message.from == grid && message.to.contains(&comms) => delivered += 1,
                EventPayload::MessageDropped { message, .. } if message.from == grid && message.to.contains(&comms) => dropped += 1,
                _ => {}
            }
        }
    }
    if delivered > 0 || dropped == 0 {
        return Err(format!("grid->comms delivered {delivered}, dropped {dropped}"));
    }
    Ok(format!("6 scenarios x 50 seeds bitwise identical; full-horizon cut delivered 0 of {dropped}"))
}

fn safety_factor() -> Verdict {
    let ps: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
    let ns: Vec<f64> = (0..25).map(|j| 1.0 + j as f64 * 0.75).collect();
    let mut checked = 0;
    for (pi, &p) in ps.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            let v = apply_safety_factor(p, n).map_err(|e| e.to_string())?;
            checked += 1;
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("p={p} n={n}: {v} outside [0,1]"));
            }
            if p * n < 1.0 && v != p * n {
                return Err(format!("p={p} n={n}: {v} != p*n"));
            }
            if p * n >= 1.0 && v != 1.0 {
                return Err(format!("p={p} n={n}: {v} not clamped"));
            }
            if pi > 0 && v < apply_safety_factor(ps[pi - 1], n).unwrap() {
                return Err(format!("not monotone in p at p={p} n={n}"));
            }
            if ni > 0 && v < apply_safety_factor(p, ns[ni - 1]).unwrap() {
                return Err(format!("not monotone in n at p={p} n={n}"));
            }
        }
    }
    if apply_safety_factor(1.1, 2.0).is_ok() || apply_safety_factor(0.5, 0.5).is_ok() {
        return Err("out-of-range inputs accepted".into());
    }
    Ok(format!("{checked} grid points"))
}

fn baseline_pairing() -> Verdict {
    let worker = json!({"id": "worker", "behavior": {"kind": "table_stochastic",
        "capabilities": {"tags": {"draft": 0.2}},
        "tasks": [{"at_step": 0, "tag": "draft", "input": "quarterly memo"}]}});
    let env = json!({"name": "declarative", "params": {
        "initial": {"done": false},
        "effects": [{"on_action": "complete:draft", "set": {"done": true}}]}});
    let milestones = json!([{"name": "done", "when": [{"key": "done", "value": true}]}]);
    let treatment = spec_from(json!({
        "name": "draft-with-reviewer",
        "topology": {"kind": "task_force", "edges": [["worker", "reviewer"]]},
        "agents": [worker, {"id": "reviewer", "behavior": {"kind": "scripted", "rules": []}}],
        "protocol": {"rounds": 2}, "horizon": 2, "environment": env, "milestones": milestones
    }));
    let portion = spec_from(json!({
        "name": "draft-alone",
        "topology": {"kind": "single_agent"},
        "agents": [worker],
        "protocol": {"rounds": 2}, "horizon": 2, "environment": env, "milestones": milestones
    }));
    let kind = BaselineKind::SingleAgentDecomposed { portions: vec![portion] };
    let r = run_baseline(&kind, &treatment, 500, 0, &EngineOptions::default()).map_err(|e| e.to_string())?;
    let d = r.delta.ok_or("no delta")?;
    let ensemble = run_ensemble(&treatment, &seeds_from(0, 500), &EngineOptions::default()).map_err(|e| e.to_string())?;
    let detail = format!("delta {} over {} pairs, treatment success {:.3}", d.mean, d.pairs, ensemble.success_rate());
    if d.mean == 0.0 && d.ci == (0.0, 0.0) && r.treatment_score > 0.0 && r.treatment_score < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("determinism", determinism),
        ("golden scenarios", golden_scenarios),
        ("metric oracles", metric_oracles),
        ("statistical convergence", statistical_convergence),
        ("judge calibration", judge_calibration),
        ("injection identity", injection_identity),
        ("safety factor", safety_factor),
        ("baseline pairing", baseline_pairing),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(d) => println!("PASS {} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
