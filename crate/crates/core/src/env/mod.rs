//! The stochastic shortest path view of a RAP instance: compact states,
//! legal actions, completion-rate driven transitions and Δκ costs.

mod enumerate;

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::Rng;
use thiserror::Error;

use crate::rap::{MeasureError, OpId, PerformanceMeasure, RapInstance, ResourceId, Schedule, ScheduleEntry, StateId};

pub use enumerate::Branch;

/// What one resource is doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResourceStatus {
    pub state: StateId,
    /// `None` is the idle marker.
    pub running: Option<OpId>,
    /// Start time of the running operation; 0 when idle.
    pub start: u32,
}

impl ResourceStatus {
    pub fn is_idle(&self) -> bool {
        self.running.is_none()
    }
}

/// Compact SSP state.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub now: u32,
    /// κ of the partial solution.
    pub perf: f64,
    pub resources: Vec<ResourceStatus>,
    /// In-scope tasks not yet finished.
    pub unfinished: FixedBitSet,
    /// Tasks that have been started (running or finished).
    pub started: FixedBitSet,
    /// Task (or non-task operation) chosen by a decomposed select-task.
    pub pending: Option<OpId>,
    pub non_task_used: u32,
}

impl PartialEq for EnvState {
    fn eq(&self, other: &Self) -> bool {
        self.now == other.now
            && self.perf.to_bits() == other.perf.to_bits()
            && self.resources == other.resources
            && self.unfinished == other.unfinished
            && self.started == other.started
            && self.pending == other.pending
            && self.non_task_used == other.non_task_used
    }
}

impl Eq for EnvState {}

impl Hash for EnvState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.now.hash(h);
        self.perf.to_bits().hash(h);
        self.resources.hash(h);
        self.unfinished.as_slice().hash(h);
        self.started.as_slice().hash(h);
        self.pending.hash(h);
        self.non_task_used.hash(h);
    }
}

impl EnvState {
    pub fn is_finished(&self, task: OpId) -> bool {
        self.started.contains(task.index()) && !self.unfinished.contains(task.index())
    }

    pub fn is_running(&self, op: OpId) -> bool {
        self.resources.iter().any(|r| r.running == Some(op))
    }

    pub fn any_running(&self) -> bool {
        self.resources.iter().any(|r| r.running.is_some())
    }

    pub fn num_unfinished(&self) -> usize {
        self.unfinished.count_ones(..)
    }

    /// Strictly increases along every trajectory.
    pub fn progress(&self) -> u64 {
        self.now as u64 + 2 * (self.started.count_ones(..) as u64 + self.non_task_used as u64) + u64::from(self.pending.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControlAction {
    Wait,
    Assign { op: OpId, resource: ResourceId },
    SelectTask(OpId),
    SelectResource(ResourceId),
}

impl fmt::Display for ControlAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlAction::Wait => write!(f, "wait"),
            ControlAction::Assign { op, resource } => write!(f, "assign({op}, {resource})"),
            ControlAction::SelectTask(op) => write!(f, "select_task({op})"),
            ControlAction::SelectResource(r) => write!(f, "select_resource({r})"),
        }
    }
}

/// An operation that finished during a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub resource: ResourceId,
    pub op: OpId,
    pub start: u32,
    pub finish: u32,
    pub end_state: StateId,
}

#[derive(Debug, Clone)]
pub struct TransitionOutcome {
    pub next: EnvState,
    pub cost: f64,
    pub finished: Vec<Completion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    /// Split assignments into select-task / select-resource decisions.
    pub decompose: bool,
    /// Jump over ticks without completions.
    pub skip_waits: bool,
    /// Cost per unfinished task on entering a failure state. `None` uses the
    /// sum of maximal durations.
    pub fail_penalty: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { decompose: false, skip_waits: true, fail_penalty: None }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("decomposed action {0} used with a flat environment")]
    WrongActionSpace(ControlAction),
}

/// Environment over one immutable instance. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Env {
    instance: Arc<RapInstance>,
    measure: PerformanceMeasure,
    config: EnvConfig,
    scope: FixedBitSet,
    /// Per job, its in-scope tasks (late-job bookkeeping).
    job_tasks: Vec<Vec<OpId>>,
    fail_penalty: f64,
}

impl Env {
    pub fn new(instance: Arc<RapInstance>, measure: PerformanceMeasure, config: EnvConfig) -> Result<Self, EnvError> {
        measure.check()?;
        let mut scope = FixedBitSet::with_capacity(instance.num_ops());
        for t in instance.active_tasks() {
            scope.insert(t.index());
        }
        let fail_penalty = config.fail_penalty.unwrap_or(instance.max_duration_sum() as f64);
        let mut env = Self { instance, measure, config, scope, job_tasks: Vec::new(), fail_penalty };
        env.refresh_jobs();
        Ok(env)
    }

    fn refresh_jobs(&mut self) {
        self.job_tasks = match &self.measure.jobs {
            Some(jobs) => jobs
                .jobs
                .iter()
                .map(|ts| ts.iter().copied().filter(|t| self.scope.contains(t.index())).collect())
                .collect(),
            None => Vec::new(),
        };
    }

    /// Restricts the environment to a subset of the tasks; the others are
    /// treated as absent.
    pub fn with_task_mask(&self, tasks: &[OpId]) -> Self {
        let mut out = self.clone();
        let mut scope = FixedBitSet::with_capacity(self.instance.num_ops());
        for t in tasks {
            if self.scope.contains(t.index()) {
                scope.insert(t.index());
            }
        }
        out.scope = scope;
        out.refresh_jobs();
        out
    }

    pub fn with_config(&self, config: EnvConfig) -> Self {
        let mut out = self.clone();
        out.fail_penalty = config.fail_penalty.unwrap_or(self.instance.max_duration_sum() as f64);
        out.config = config;
        out
    }

    pub fn instance(&self) -> &RapInstance {
        &self.instance
    }

    pub fn instance_arc(&self) -> &Arc<RapInstance> {
        &self.instance
    }

    pub fn measure(&self) -> &PerformanceMeasure {
        &self.measure
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn fail_penalty(&self) -> f64 {
        self.fail_penalty
    }

    pub fn in_scope(&self, task: OpId) -> bool {
        self.scope.contains(task.index())
    }

    pub fn scope(&self) -> impl Iterator<Item = OpId> + '_ {
        self.scope.ones().map(|i| OpId(i as u32))
    }

    pub fn num_scope_tasks(&self) -> usize {
        self.scope.count_ones(..)
    }

    /// Upper bound on the number of decisions in one episode.
    pub fn decision_bound(&self) -> usize {
        let ops = self.num_scope_tasks() + self.instance.non_task_cap() as usize;
        // each started op gives at most one assign (two when decomposed) and
        // one wait decision
        3 * ops + 1
    }

    /// State built from given initial resource states.
    pub fn state_from(&self, states: &[StateId]) -> EnvState {
        let n = self.instance.num_ops();
        EnvState {
            now: 0,
            perf: self.measure.identity(),
            resources: states.iter().map(|&s| ResourceStatus { state: s, running: None, start: 0 }).collect(),
            unfinished: self.scope.clone(),
            started: FixedBitSet::with_capacity(n),
            pending: None,
            non_task_used: 0,
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let states: Vec<StateId> = self.instance.resources().map(|r| self.instance.initial(r).sample(rng)).collect();
        self.state_from(&states)
    }

    pub fn status(&self, state: &EnvState) -> Status {
        if state.unfinished.is_clear() {
            Status::Success
        } else if state.any_running() || state.pending.is_some() || !self.assignable(state).is_empty() {
            Status::Running
        } else {
            Status::Failure
        }
    }

    pub fn is_terminal(&self, state: &EnvState) -> Status {
        self.status(state)
    }

    fn ready(&self, state: &EnvState, op: OpId) -> bool {
        if !self.instance.is_task(op) {
            return state.non_task_used < self.instance.non_task_cap();
        }
        self.scope.contains(op.index())
            && !state.started.contains(op.index())
            && self
                .instance
                .predecessors(op)
                .iter()
                .all(|p| !self.scope.contains(p.index()) || state.is_finished(*p))
    }

    /// Legal `(op, resource)` pairs, sorted by (op, resource).
    fn assignable(&self, state: &EnvState) -> Vec<(OpId, ResourceId)> {
        let mut out = Vec::new();
        for (ri, rs) in state.resources.iter().enumerate() {
            let r = ResourceId(ri as u32);
            if !rs.is_idle() || self.instance.is_disabled(r) {
                continue;
            }
            for &op in self.instance.ops_for_state(rs.state) {
                if self.ready(state, op) {
                    out.push((op, r));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Flat action set: assignments ordered by (op, resource), then wait.
    pub fn available_actions(&self, state: &EnvState) -> Vec<ControlAction> {
        if state.unfinished.is_clear() {
            return Vec::new();
        }
        let mut out: Vec<ControlAction> =
            self.assignable(state).into_iter().map(|(op, resource)| ControlAction::Assign { op, resource }).collect();
        if state.any_running() {
            out.push(ControlAction::Wait);
        }
        out
    }

    /// Decomposed action set.
    pub fn decomposed_actions(&self, state: &EnvState) -> Vec<ControlAction> {
        if state.unfinished.is_clear() {
            return Vec::new();
        }
        let pairs = self.assignable(state);
        match state.pending {
            Some(v) => pairs.into_iter().filter(|&(op, _)| op == v).map(|(_, r)| ControlAction::SelectResource(r)).collect(),
            None => {
                let mut out: Vec<ControlAction> = Vec::new();
                for (op, _) in pairs {
                    if out.last() != Some(&ControlAction::SelectTask(op)) {
                        out.push(ControlAction::SelectTask(op));
                    }
                }
                if state.any_running() {
                    out.push(ControlAction::Wait);
                }
                out
            }
        }
    }

    /// Actions of the configured action space.
    pub fn actions(&self, state: &EnvState) -> Vec<ControlAction> {
        if self.config.decompose {
            self.decomposed_actions(state)
        } else {
            self.available_actions(state)
        }
    }

    fn start_op(&self, state: &EnvState, op: OpId, resource: ResourceId) -> EnvState {
        let mut next = state.clone();
        let rs = &mut next.resources[resource.index()];
        debug_assert!(rs.is_idle(), "{resource} is busy");
        rs.running = Some(op);
        rs.start = state.now;
        if self.instance.is_task(op) {
            next.started.insert(op.index());
        } else {
            next.non_task_used += 1;
        }
        next.pending = None;
        next
    }

    /// Applies completions at time `next.now` and returns the cost of the
    /// transition from `prev`.
    fn finish_ops(&self, prev: &EnvState, next: &mut EnvState, done: &[(ResourceId, StateId)]) -> (f64, Vec<Completion>) {
        let mut events = Vec::with_capacity(done.len());
        for &(r, end_state) in done {
            let rs = &mut next.resources[r.index()];
            let op = rs.running.take().expect("completion of an idle resource");
            events.push(Completion { resource: r, op, start: rs.start, finish: next.now, end_state });
            rs.state = end_state;
            rs.start = 0;
            let is_task = self.instance.is_task(op);
            if is_task {
                next.unfinished.set(op.index(), false);
            }
            let job_done = is_task && self.job_done(next, op);
            next.perf = self.measure.absorb(next.perf, op, is_task, next.now, job_done);
        }
        let mut cost = next.perf - prev.perf;
        if self.status(next) == Status::Failure {
            cost += self.fail_penalty * next.num_unfinished() as f64;
        }
        (cost, events)
    }

    fn job_done(&self, state: &EnvState, op: OpId) -> bool {
        let Some(jobs) = &self.measure.jobs else { return false };
        match jobs.job_of(op) {
            Some(j) => self.job_tasks[j].iter().all(|t| !state.unfinished.contains(t.index())),
            None => false,
        }
    }

    /// One elementary transition.
    pub fn step<R: Rng + ?Sized>(&self, state: &EnvState, action: ControlAction, rng: &mut R) -> TransitionOutcome {
        match action {
            ControlAction::Assign { op, resource } => self.assign_outcome(state, op, resource),
            ControlAction::SelectTask(op) => {
                let mut next = state.clone();
                next.pending = Some(op);
                TransitionOutcome { next, cost: 0.0, finished: Vec::new() }
            }
            ControlAction::SelectResource(resource) => {
                let op = state.pending.expect("select_resource without a pending task");
                self.assign_outcome(state, op, resource)
            }
            ControlAction::Wait => self.tick(state, state.now + 1, rng),
        }
    }

    fn assign_outcome(&self, state: &EnvState, op: OpId, resource: ResourceId) -> TransitionOutcome {
        let mut next = self.start_op(state, op, resource);
        // starting an op can never complete anything; only failure can cost
        let (cost, finished) = self.finish_ops(state, &mut next, &[]);
        TransitionOutcome { next, cost, finished }
    }

    /// Advances time to `to` (assumed to be the first tick at which any
    /// completion is possible) and samples completions.
    fn tick<R: Rng + ?Sized>(&self, state: &EnvState, to: u32, rng: &mut R) -> TransitionOutcome {
        let mut next = state.clone();
        next.now = to;
        let mut done = Vec::new();
        for (ri, rs) in state.resources.iter().enumerate() {
            let Some(op) = rs.running else { continue };
            let cap = self.instance.capability(rs.state, op).expect("running op has a capability");
            let rate = cap.duration.completion_rate(to - rs.start).expect("operation outlived its duration support");
            let completes = if rate >= 1.0 {
                true
            } else if rate > 0.0 {
                rng.gen::<f64>() < rate
            } else {
                false
            };
            if completes {
                done.push((ResourceId(ri as u32), cap.effect.sample(rng)));
            }
        }
        let (cost, finished) = self.finish_ops(state, &mut next, &done);
        TransitionOutcome { next, cost, finished }
    }

    /// First tick after `state.now` at which some running operation may
    /// complete.
    pub(crate) fn next_event_time(&self, state: &EnvState) -> Option<u32> {
        state
            .resources
            .iter()
            .filter_map(|rs| {
                let op = rs.running?;
                let d = self.instance.duration(rs.state, op)?;
                let elapsed = state.now + 1 - rs.start;
                d.next_possible(elapsed).map(|e| rs.start + e)
            })
            .min()
    }

    /// Repeats elementary waits until at least one operation completes.
    pub fn wait_to_next_event<R: Rng + ?Sized>(&self, state: &EnvState, rng: &mut R) -> TransitionOutcome {
        let mut cur = state.clone();
        let mut cost = 0.0;
        loop {
            let to = self.next_event_time(&cur).expect("wait with nothing running");
            let out = self.tick(&cur, to, rng);
            cost += out.cost;
            if !out.finished.is_empty() || self.status(&out.next) != Status::Running {
                return TransitionOutcome { next: out.next, cost, finished: out.finished };
            }
            cur = out.next;
        }
    }

    /// A decision: applies `action` (wait in the configured wait mode), then
    /// automatically applies wait while it is the only legal action.
    pub fn decide<R: Rng + ?Sized>(&self, state: &EnvState, action: ControlAction, rng: &mut R) -> TransitionOutcome {
        let mut out = match action {
            ControlAction::Wait => self.wait(state, rng),
            a => self.step(state, a, rng),
        };
        while self.only_wait(&out.next) {
            let more = self.wait(&out.next, rng);
            out.cost += more.cost;
            out.finished.extend(more.finished);
            out.next = more.next;
        }
        out
    }

    fn wait<R: Rng + ?Sized>(&self, state: &EnvState, rng: &mut R) -> TransitionOutcome {
        if self.config.skip_waits {
            self.wait_to_next_event(state, rng)
        } else {
            self.step(state, ControlAction::Wait, rng)
        }
    }

    pub(crate) fn only_wait(&self, state: &EnvState) -> bool {
        if state.pending.is_some() || !state.any_running() || state.unfinished.is_clear() {
            return false;
        }
        self.assignable(state).is_empty()
    }

    /// Decision-level successor of a fresh initial state: applies the
    /// automatic waits (none are possible before anything runs).
    pub fn is_decision_state(&self, state: &EnvState) -> bool {
        self.status(state) == Status::Running && !self.only_wait(state)
    }
}

/// Rebuilds the realized schedule of an episode.
pub fn schedule_from(initial: &EnvState, completions: &[Completion]) -> Schedule {
    let mut s = Schedule::new().with_initial(initial.resources.iter().map(|r| r.state).collect());
    for c in completions {
        s.insert_entry(ScheduleEntry {
            resource: c.resource,
            start: c.start,
            op: c.op,
            duration: c.finish - c.start,
            end_state: Some(c.end_state),
        })
        .expect("one operation per resource and start time");
    }
    s
}
