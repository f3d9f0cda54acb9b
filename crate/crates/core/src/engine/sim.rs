use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::stream::stream;
use super::{EngineError, EngineOptions, Environment, RunResult};
use crate::agents::{truncate_context, AgentBehavior, AgentMemory, Observation, Recipients};
use crate::inject::{apply_injections, Injector, PerturbationAction};
use crate::model::{
    validate, AgentDecl, AgentId, Aggregation, CommModel, Event, EventPayload, Message, MessageKind, MilestoneKind,
    RunStatus, ScenarioSpec, Severity, State, TopologyKind, TopologySpec, Trace, TurnOrdering, Value,
};

struct Slot {
    decl: AgentDecl,
    behavior: Box<dyn AgentBehavior>,
    memory: AgentMemory,
    objective: String,
    taint: BTreeSet<String>,
    first: BTreeMap<String, u32>,
}

impl Slot {
    fn contaminate(&mut self, label: &str, step: u32) -> bool {
        if self.taint.insert(label.to_string()) {
            self.first.insert(label.to_string(), step);
            true
        } else {
            false
        }
    }
}

/// One run in progress. [`run_once`] drives it to completion; probes stop it
/// part-way.
pub struct Simulation {
    spec: ScenarioSpec,
    seed: u64,
    options: EngineOptions,
    slots: Vec<Slot>,
    topology: TopologySpec,
    env: Box<dyn Environment>,
    state: State,
    env_taint: BTreeMap<String, BTreeSet<String>>,
    env_writer: BTreeMap<String, AgentId>,
    trace: Trace,
    step: u32,
    horizon: u32,
    injector: Injector,
    /// Emitted this step, delivered next step.
    outbox: Vec<Message>,
    milestones_hit: BTreeMap<String, u32>,
    success_step: Option<u32>,
    ended: Option<(RunStatus, Option<String>)>,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec, seed: u64, options: &EngineOptions) -> Result<Self, EngineError> {
        let mut spec = spec.clone();
        spec.normalize();
        let errors: Vec<_> = validate(&spec)
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .collect();
        if !errors.is_empty() {
            return Err(EngineError::Invalid(errors));
        }
        let env = options.environments.create(&spec.environment)?;
        let state = env.initial_state();
        let slots = spec
            .agents
            .iter()
            .map(|d| make_slot(d, options))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Simulation {
            trace: Trace::new(spec.digest(), seed),
            seed,
            options: options.clone(),
            slots,
            topology: spec.topology.clone(),
            env,
            state,
            env_taint: BTreeMap::new(),
            env_writer: BTreeMap::new(),
            step: 0,
            horizon: spec.horizon,
            injector: Injector::new(spec.injections.clone(), seed),
            outbox: Vec::new(),
            milestones_hit: BTreeMap::new(),
            success_step: None,
            ended: None,
            spec,
        })
    }

    /// Steps executed so far.
    pub fn current_step(&self) -> u32 {
        self.step
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    fn limit(&self) -> u32 {
        self.spec.protocol.rounds.min(self.horizon)
    }

    pub fn is_done(&self) -> bool {
        self.ended.is_some() || self.step >= self.limit()
    }

    fn emit(&mut self, step: u32, payload: EventPayload) {
        let seq = self.trace.events.len() as u64;
        self.trace.events.push(Event { step, seq, payload });
    }

    fn fail(&mut self, reason: String) {
        if self.ended.is_none() {
            self.ended = Some((RunStatus::Failure, Some(reason)));
        }
    }

    /// Executes one step. Returns `false` once the run is over.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        if self.is_done() {
            return Ok(false);
        }
        let t = self.step;

        for f in self.injector.begin_step(t, &self.trace.events) {
            self.emit(t, EventPayload::InjectionFired {
                label: f.label.clone(),
                detail: f.detail,
            });
            let action = self.injector.specs()[f.index].action.clone();
            self.apply_firing(&f.label, action)?;
        }
        if self.is_done() {
            return Ok(false);
        }

        let delivered = std::mem::take(&mut self.outbox);
        let mut order: Vec<usize> = (0..self.slots.len()).collect();
        match self.spec.protocol.ordering {
            TurnOrdering::Fixed => {}
            TurnOrdering::Rotating => {
                if !order.is_empty() {
                    let k = t as usize % order.len();
                    order.rotate_left(k);
                }
            }
            TurnOrdering::Random => order.shuffle(&mut stream(self.seed, &["order", &t.to_string()])),
        }

        // Keys changed by `advance` inherit the taint of this step's tainted writes.
        let mut step_taint = BTreeSet::new();
        let mut step_writer = None;
        for i in order {
            if self.ended.is_some() {
                break;
            }
            self.agent_turn(i, t, &delivered, &mut step_taint, &mut step_writer);
        }

        if self.ended.is_none() {
            let before = self.state.clone();
            let mut rng = stream(self.seed, &["env", &t.to_string()]);
            match self.env.advance(&mut self.state, t, &mut rng) {
                Ok(()) => {
                    let writer = step_writer.clone();
                    self.commit_env_diff(t, &before, &step_taint, writer);
                }
                Err(e) => self.fail(format!("environment at step {t}: {e}")),
            }
        }

        self.check_milestones(t);

        if self.spec.protocol.reflection && self.ended.is_none() {
            for i in 0..self.slots.len() {
                if let Some(text) = self.slots[i].behavior.reflect(&self.slots[i].memory, t) {
                    self.slots[i].memory.push(t, text);
                    let agent = self.slots[i].decl.id.clone();
                    let memory = self.slots[i].memory.snapshot();
                    self.emit(t, EventPayload::AgentInternal {
                        agent,
                        memory,
                        note: Some("reflection".into()),
                    });
                }
            }
        }

        self.step = t + 1;
        Ok(!self.is_done())
    }

    fn apply_firing(&mut self, label: &str, action: PerturbationAction) -> Result<(), EngineError> {
        match action {
            PerturbationAction::InsertAgent { agent } => {
                if !self.topology.is_member(&agent.id) {
                    self.topology.insert_member(agent.id.clone());
                    let pattern = match (&self.topology.kind, &self.topology.hub) {
                        (TopologyKind::Orchestrator, Some(h)) => format!("spoke of {h}"),
                        _ => "full links".to_string(),
                    };
                    self.trace
                        .header
                        .notes
                        .insert(format!("insert_agent.{label}"), format!("{} joined as {pattern}", agent.id));
                    self.slots.push(make_slot(&agent, &self.options)?);
                }
            }
            PerturbationAction::ContradictObjective { agent, objective } => {
                if let Some(s) = self.slots.iter_mut().find(|s| s.decl.id == agent) {
                    s.objective = objective;
                }
            }
            PerturbationAction::DeadlinePressure { horizon } => self.horizon = self.horizon.min(horizon),
            _ => {}
        }
        Ok(())
    }

    fn observation(&self, i: usize, t: u32, inbox: Vec<Message>) -> Observation {
        let slot = &self.slots[i];
        let id = &slot.decl.id;
        let mut env_view = self.env.view(&self.state, &slot.decl);
        for k in self.injector.withheld_keys(id, t) {
            env_view.remove(&k);
        }
        Observation {
            step: t,
            agent: id.clone(),
            inbox,
            env_view,
            objective: slot.objective.clone(),
            peers: self.topology.allowed_recipients(id).unwrap_or_default(),
            others: self.topology.members.iter().filter(|m| *m != id).cloned().collect(),
            disabled_capabilities: self.injector.disabled_tools(id, t),
        }
    }

    fn visible_memory(&self, i: usize) -> AgentMemory {
        let slot = &self.slots[i];
        match slot.decl.context_budget {
            Some(b) => truncate_context(&slot.memory, b),
            None => slot.memory.clone(),
        }
    }

    fn agent_turn(
        &mut self,
        i: usize,
        t: u32,
        delivered: &[Message],
        step_taint: &mut BTreeSet<String>,
        step_writer: &mut Option<AgentId>,
    ) {
        let id = self.slots[i].decl.id.clone();
        let inbox: Vec<Message> = delivered.iter().filter(|m| m.is_addressed_to(&id)).cloned().collect();

        // Reading is contaminating.
        for m in &inbox {
            for label in &m.taint {
                if self.slots[i].contaminate(label, t) {
                    self.emit(t, EventPayload::Contaminated {
                        agent: id.clone(),
                        label: label.clone(),
                        source: Some(m.from.clone()),
                        via: "message".into(),
                    });
                }
            }
        }
        let obs = self.observation(i, t, inbox);
        for key in obs.env_view.keys() {
            let Some(labels) = self.env_taint.get(key).cloned() else {
                continue;
            };
            for label in labels {
                if self.slots[i].contaminate(&label, t) {
                    self.emit(t, EventPayload::Contaminated {
                        agent: id.clone(),
                        label,
                        source: self.env_writer.get(key).cloned(),
                        via: format!("env:{key}"),
                    });
                }
            }
        }

        let memory = self.visible_memory(i);
        let mut rng = stream(self.seed, &["agent", id.as_str(), &t.to_string()]);
        let decision = match self.slots[i].behavior.decide(&memory, &obs, &mut rng) {
            Ok(d) => d,
            Err(e) => {
                let snapshot = self.slots[i].memory.snapshot();
                self.emit(t, EventPayload::AgentInternal {
                    agent: id.clone(),
                    memory: snapshot,
                    note: Some(format!("error: {e}")),
                });
                self.fail(format!("agent {id} at step {t}: {e}"));
                return;
            }
        };

        for label in &decision.seed_taint {
            if self.slots[i].contaminate(label, t) {
                self.emit(t, EventPayload::Contaminated {
                    agent: id.clone(),
                    label: label.clone(),
                    source: None,
                    via: "seed-error".into(),
                });
            }
        }

        for p in decision.predictions {
            if obs.others.contains(&p.target) {
                self.emit(t, EventPayload::PredictionMade {
                    agent: id.clone(),
                    target: p.target,
                    label: p.label,
                    distribution: p.distribution,
                });
            } else {
                let snapshot = self.slots[i].memory.snapshot();
                self.emit(t, EventPayload::AgentInternal {
                    agent: id.clone(),
                    memory: snapshot,
                    note: Some(format!("prediction for non-member {} dropped", p.target)),
                });
            }
        }

        let mut pending = Vec::new();
        for out in decision.messages {
            let requested = match (self.spec.protocol.comm_model, out.to) {
                (CommModel::Broadcast, _) | (_, Recipients::AllPeers) => obs.peers.clone(),
                (_, Recipients::Agents(set)) => set,
            };
            let (ok, bad): (BTreeSet<AgentId>, BTreeSet<AgentId>) =
                requested.into_iter().partition(|r| obs.peers.contains(r));
            let base = Message {
                step: t,
                from: id.clone(),
                to: BTreeSet::new(),
                content: out.content,
                kind: out.kind,
                taint: self.slots[i].taint.clone(),
            };
            if !bad.is_empty() {
                pending.push(EventPayload::MessageDropped {
                    message: Message { to: bad, ..base.clone() },
                    reason: "no-channel".into(),
                });
            }
            if ok.is_empty() {
                continue;
            }
            if self.spec.protocol.comm_model == CommModel::Pairwise {
                for r in ok {
                    pending.push(EventPayload::MessageSent {
                        message: Message {
                            to: [r].into_iter().collect(),
                            ..base.clone()
                        },
                    });
                }
            } else {
                pending.push(EventPayload::MessageSent {
                    message: Message { to: ok, ..base },
                });
            }
        }
        for ev in apply_injections(&mut self.injector, t, pending) {
            match ev {
                EventPayload::Contaminated { ref agent, ref label, .. } => {
                    if agent == &id && self.slots[i].contaminate(label, t) {
                        self.emit(t, ev);
                    }
                }
                EventPayload::MessageSent { mut message } => {
                    message.taint.extend(self.slots[i].taint.iter().cloned());
                    self.outbox.push(message.clone());
                    self.emit(t, EventPayload::MessageSent { message });
                }
                other => self.emit(t, other),
            }
        }

        if let Some(action) = decision.action {
            let taint = self.slots[i].taint.clone();
            self.emit(t, EventPayload::ActionTaken {
                agent: id.clone(),
                action: action.clone(),
                taint: taint.clone(),
            });
            let before = self.state.clone();
            let mut rng = stream(self.seed, &["env-action", id.as_str(), &t.to_string()]);
            match self.env.apply(&mut self.state, &id, &action, t, &mut rng) {
                Ok(()) => {
                    if !taint.is_empty() {
                        step_taint.extend(taint.iter().cloned());
                        *step_writer = Some(id.clone());
                    }
                    self.commit_env_diff(t, &before, &taint, Some(id.clone()));
                }
                Err(e) => {
                    self.fail(format!("environment rejected {} from {id} at step {t}: {e}", action.label));
                    return;
                }
            }
        }

        if let Some(text) = decision.memory_append {
            self.slots[i].memory.push(t, text);
        }
        let snapshot = self.slots[i].memory.snapshot();
        self.emit(t, EventPayload::AgentInternal {
            agent: id,
            memory: snapshot,
            note: None,
        });
    }

    fn commit_env_diff(&mut self, t: u32, before: &State, taint: &BTreeSet<String>, writer: Option<AgentId>) {
        let keys: BTreeSet<&String> = before.keys().chain(self.state.keys()).collect();
        let changed: Vec<(String, Value)> = keys
            .into_iter()
            .filter(|k| before.get(*k) != self.state.get(*k))
            .map(|k| (k.clone(), self.state.get(k).cloned().unwrap_or(Value::Null)))
            .collect();
        for (key, value) in changed {
            if taint.is_empty() {
                self.env_taint.remove(&key);
                self.env_writer.remove(&key);
            } else {
                self.env_taint.insert(key.clone(), taint.clone());
                if let Some(w) = &writer {
                    self.env_writer.insert(key.clone(), w.clone());
                }
            }
            self.emit(t, EventPayload::EnvChanged {
                key,
                value,
                taint: taint.clone(),
            });
        }
    }

    fn check_milestones(&mut self, t: u32) {
        let mut newly = Vec::new();
        for m in &self.spec.milestones {
            if !self.milestones_hit.contains_key(&m.name) && m.holds(&self.state) {
                newly.push((m.name.clone(), m.kind));
            }
        }
        for (name, kind) in newly {
            self.milestones_hit.insert(name.clone(), t);
            self.emit(t, EventPayload::MilestoneReached { name: name.clone(), kind });
            if kind == MilestoneKind::Failure {
                self.fail(format!("failure milestone `{name}` reached"));
            }
        }
        let mut required = self.spec.required_milestones().peekable();
        if self.success_step.is_none()
            && required.peek().is_some()
            && required.all(|m| self.milestones_hit.contains_key(&m.name))
        {
            self.success_step = Some(t);
        }
    }

    fn aggregate(&mut self, t: u32) {
        let mut last_vote: BTreeMap<&AgentId, &str> = BTreeMap::new();
        for m in self.trace.messages().filter(|m| m.kind == MessageKind::Vote) {
            last_vote.insert(&m.from, m.content.as_str());
        }
        let value = match self.spec.protocol.aggregation {
            Aggregation::None => return,
            Aggregation::MajorityVote => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for v in last_vote.values() {
                    *counts.entry(v).or_default() += 1;
                }
                let mut best: Option<(&str, usize)> = None;
                for (v, n) in counts {
                    if best.is_none_or(|(_, b)| n > b) {
                        best = Some((v, n));
                    }
                }
                best.map(|(v, _)| v.to_string())
            }
            Aggregation::Judge => {
                let judge = self.topology.hub.clone().or_else(|| self.topology.members.first().cloned());
                judge.and_then(|j| last_vote.get(&j).map(|v| v.to_string()))
            }
        };
        let Some(value) = value else { return };
        let before = self.state.clone();
        self.state.insert("aggregate".into(), Value::String(value));
        self.commit_env_diff(t, &before, &BTreeSet::new(), None);
        self.check_milestones(t);
    }

    /// Out-of-band question to `agent` at the current point of the run.
    /// Nothing is recorded in the trace.
    pub fn probe(&self, agent: &AgentId, question: &str) -> Result<String, EngineError> {
        let i = self
            .slots
            .iter()
            .position(|s| &s.decl.id == agent)
            .ok_or_else(|| EngineError::UnknownAgent(agent.clone()))?;
        let inbox = self.outbox.iter().filter(|m| m.is_addressed_to(agent)).cloned().collect();
        let obs = self.observation(i, self.step, inbox);
        self.slots[i]
            .behavior
            .answer_probe(&self.visible_memory(i), &obs, question)
            .map_err(|source| EngineError::Behavior {
                agent: agent.clone(),
                source,
            })
    }

    pub fn finish(mut self) -> RunResult {
        let last = self.step.saturating_sub(1);
        if self.ended.is_none() {
            self.aggregate(last);
        }
        let (status, reason) = match self.ended.take() {
            Some(end) => end,
            None => {
                let required: Vec<&str> = self.spec.required_milestones().map(|m| m.name.as_str()).collect();
                let missing: Vec<&str> = required
                    .iter()
                    .copied()
                    .filter(|n| !self.milestones_hit.contains_key(*n))
                    .collect();
                let cut = self.horizon < self.spec.protocol.rounds;
                if cut && (required.is_empty() || !missing.is_empty()) {
                    (
                        RunStatus::HorizonExceeded,
                        Some(format!("horizon {} reached before round {}", self.horizon, self.spec.protocol.rounds)),
                    )
                } else if missing.is_empty() {
                    (RunStatus::Success, None)
                } else {
                    (
                        RunStatus::Failure,
                        Some(format!("required milestones not reached: {}", missing.join(", "))),
                    )
                }
            }
        };
        let success_step = self.success_step;
        self.emit(last, EventPayload::RunEnded {
            status,
            reason: reason.clone(),
            success_step,
        });
        RunResult {
            taint_report: self
                .slots
                .iter()
                .filter(|s| !s.first.is_empty())
                .map(|s| (s.decl.id.clone(), s.first.clone()))
                .collect(),
            milestones_hit: self.milestones_hit,
            status,
            reason,
            success_step,
            final_state: self.state,
            steps_executed: self.step,
            trace: self.trace,
        }
    }
}

fn make_slot(d: &AgentDecl, options: &EngineOptions) -> Result<Slot, EngineError> {
    let behavior = d
        .behavior
        .build(options.llm_transport.clone())
        .map_err(|source| EngineError::Behavior {
            agent: d.id.clone(),
            source,
        })?;
    Ok(Slot {
        decl: d.clone(),
        behavior,
        memory: AgentMemory::new(d.memory_capacity),
        objective: d.objective.clone(),
        taint: BTreeSet::new(),
        first: BTreeMap::new(),
    })
}

/// Runs `spec` to completion on `seed`.
pub fn run_once(spec: &ScenarioSpec, seed: u64, options: &EngineOptions) -> Result<RunResult, EngineError> {
    let mut sim = Simulation::new(spec, seed, options)?;
    while sim.step()? {}
    Ok(sim.finish())
}
