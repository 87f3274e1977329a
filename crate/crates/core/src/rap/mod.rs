//! Resource allocation problem instances: resources, resource states,
//! operations, tasks, precedence, and the stochastic duration/effect/initial
//! maps.

mod dist;
mod encode;
mod measure;
mod schedule;
mod validate;

use std::collections::HashMap;
use std::fmt;

pub use dist::{completion_rate, DistError, DurationDist, EffectDist, InitialDist, StateDist, PROB_TOLERANCE};
pub use encode::{encode_jsp, encode_tsp, EncodeError, EncodedJobShop, JobShop, WeightedGraph};
pub use measure::{evaluate_measure, Composition, JobTable, MeasureError, MeasureKind, PerformanceMeasure, TaskWindow};
pub use schedule::{
    check_feasibility, resource_state_at, state_before, Feasibility, Schedule, ScheduleEntry, ScheduleError, Violation,
};
pub use validate::{validate_instance, Issue, ValidationReport};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $prefix:literal) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A reusable resource (machine, vehicle, salesman).
    ResourceId,
    "r"
);
id_type!(
    /// A resource state (setup, location, condition).
    StateId,
    "s"
);
id_type!(
    /// An operation; tasks are the operations that must be executed.
    OpId,
    "o"
);

/// Duration and effect of executing an operation from one resource state.
#[derive(Debug, Clone, PartialEq)]
pub struct Capability {
    pub duration: DurationDist,
    pub effect: EffectDist,
}

const NO_CAP: u32 = u32::MAX;

/// A (possibly stochastic) resource allocation problem.
///
/// Instances are immutable once built; the disturbance helpers return
/// modified copies.
#[derive(Debug, Clone)]
pub struct RapInstance {
    num_resources: usize,
    num_states: usize,
    num_ops: usize,
    is_task: Vec<bool>,
    tasks: Vec<OpId>,
    precedence: Vec<(OpId, OpId)>,
    preds: Vec<Vec<OpId>>,
    succs: Vec<Vec<OpId>>,
    durations: HashMap<(StateId, OpId), DurationDist>,
    effects: HashMap<(StateId, OpId), EffectDist>,
    initial: Vec<InitialDist>,
    /// Dense (state, op) -> capability index, for pairs present in both maps.
    cap_index: Vec<u32>,
    caps: Vec<Capability>,
    ops_by_state: Vec<Vec<OpId>>,
    disabled: Vec<bool>,
    cancelled: Vec<bool>,
    non_task_cap: u32,
    max_duration_sum: u64,
    expected_duration_sum: f64,
}

impl RapInstance {
    pub fn builder(num_resources: usize, num_states: usize, num_ops: usize) -> RapBuilder {
        RapBuilder::new(num_resources, num_states, num_ops)
    }

    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn resources(&self) -> impl Iterator<Item = ResourceId> + '_ {
        (0..self.num_resources as u32).map(ResourceId)
    }

    pub fn ops(&self) -> impl Iterator<Item = OpId> + '_ {
        (0..self.num_ops as u32).map(OpId)
    }

    pub fn tasks(&self) -> &[OpId] {
        &self.tasks
    }

    pub fn is_task(&self, op: OpId) -> bool {
        self.is_task.get(op.index()).copied().unwrap_or(false)
    }

    pub fn precedence(&self) -> &[(OpId, OpId)] {
        &self.precedence
    }

    pub fn predecessors(&self, task: OpId) -> &[OpId] {
        &self.preds[task.index()]
    }

    pub fn successors(&self, task: OpId) -> &[OpId] {
        &self.succs[task.index()]
    }

    pub fn initial(&self, resource: ResourceId) -> &InitialDist {
        &self.initial[resource.index()]
    }

    pub fn duration(&self, state: StateId, op: OpId) -> Option<&DurationDist> {
        self.capability(state, op).map(|c| &c.duration)
    }

    pub fn effect(&self, state: StateId, op: OpId) -> Option<&EffectDist> {
        self.capability(state, op).map(|c| &c.effect)
    }

    pub fn capability(&self, state: StateId, op: OpId) -> Option<&Capability> {
        if state.index() >= self.num_states || op.index() >= self.num_ops {
            return None;
        }
        let i = self.cap_index[state.index() * self.num_ops + op.index()];
        (i != NO_CAP).then(|| &self.caps[i as usize])
    }

    /// Operations executable from `state`, ascending by id.
    pub fn ops_for_state(&self, state: StateId) -> &[OpId] {
        self.ops_by_state.get(state.index()).map_or(&[], |v| v.as_slice())
    }

    /// Resource states from which `op` can be executed.
    pub fn capable_states(&self, op: OpId) -> Vec<StateId> {
        (0..self.num_states as u32)
            .map(StateId)
            .filter(|&s| self.capability(s, op).is_some())
            .collect()
    }

    pub(crate) fn raw_durations(&self) -> &HashMap<(StateId, OpId), DurationDist> {
        &self.durations
    }

    pub(crate) fn raw_effects(&self) -> &HashMap<(StateId, OpId), EffectDist> {
        &self.effects
    }

    /// Broken-down resources never become available again.
    pub fn is_disabled(&self, resource: ResourceId) -> bool {
        self.disabled[resource.index()]
    }

    /// Cancelled tasks are treated as absent: never offered and never
    /// required for success.
    pub fn is_cancelled(&self, task: OpId) -> bool {
        self.cancelled[task.index()]
    }

    /// Tasks that must be finished in every episode.
    pub fn active_tasks(&self) -> impl Iterator<Item = OpId> + '_ {
        self.tasks.iter().copied().filter(|t| !self.cancelled[t.index()])
    }

    /// Upper bound on the number of non-task operations per episode.
    pub fn non_task_cap(&self) -> u32 {
        self.non_task_cap
    }

    pub fn is_deterministic(&self) -> bool {
        self.caps.iter().all(|c| c.duration.is_point_mass() && c.effect.is_point_mass())
            && self.initial.iter().all(|i| i.is_point_mass())
    }

    /// Sum over operations of the largest duration among the states that can
    /// run them.
    pub fn max_duration_sum(&self) -> u64 {
        self.max_duration_sum
    }

    /// Sum over tasks of the mean expected duration over capable states.
    pub fn expected_duration_sum(&self) -> f64 {
        self.expected_duration_sum
    }

    /// Whether `pred` must finish before `succ` starts, directly or
    /// transitively.
    pub fn precedes(&self, pred: OpId, succ: OpId) -> bool {
        let mut stack = vec![pred];
        let mut seen = vec![false; self.num_ops];
        while let Some(u) = stack.pop() {
            for &v in &self.succs[u.index()] {
                if v == succ {
                    return true;
                }
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    stack.push(v);
                }
            }
        }
        false
    }

    /// Copy of the instance with `resource` broken down.
    pub fn with_disabled(&self, resource: ResourceId) -> RapInstance {
        let mut out = self.clone();
        out.disabled[resource.index()] = true;
        out
    }

    /// Copy of the instance with `tasks` cancelled.
    pub fn with_cancelled(&self, tasks: &[OpId]) -> RapInstance {
        let mut out = self.clone();
        for t in tasks {
            out.cancelled[t.index()] = true;
        }
        out
    }

    /// Builder pre-populated with this instance's data, for structural edits
    /// (new resources, new operations).
    pub fn to_builder(&self) -> RapBuilder {
        RapBuilder {
            num_resources: self.num_resources,
            num_states: self.num_states,
            num_ops: self.num_ops,
            tasks: self.is_task.clone(),
            precedence: self.precedence.clone(),
            durations: self.durations.clone(),
            effects: self.effects.clone(),
            initial: self.initial.iter().cloned().map(Some).collect(),
            disabled: self.disabled.clone(),
            cancelled: self.cancelled.clone(),
            non_task_cap: Some(self.non_task_cap),
        }
    }
}

/// In-memory construction API for [`RapInstance`].
///
/// Building never fails: structural problems (out-of-range ids, mismatched
/// domains, cyclic precedence) are reported by [`validate_instance`].
#[derive(Debug, Clone)]
pub struct RapBuilder {
    num_resources: usize,
    num_states: usize,
    num_ops: usize,
    tasks: Vec<bool>,
    precedence: Vec<(OpId, OpId)>,
    durations: HashMap<(StateId, OpId), DurationDist>,
    effects: HashMap<(StateId, OpId), EffectDist>,
    initial: Vec<Option<InitialDist>>,
    disabled: Vec<bool>,
    cancelled: Vec<bool>,
    non_task_cap: Option<u32>,
}

impl RapBuilder {
    pub fn new(num_resources: usize, num_states: usize, num_ops: usize) -> Self {
        Self {
            num_resources,
            num_states,
            num_ops,
            tasks: vec![false; num_ops],
            precedence: Vec::new(),
            durations: HashMap::new(),
            effects: HashMap::new(),
            initial: vec![None; num_resources],
            disabled: vec![false; num_resources],
            cancelled: vec![false; num_ops],
            non_task_cap: None,
        }
    }

    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn add_resource(&mut self, initial: InitialDist) -> ResourceId {
        self.num_resources += 1;
        self.initial.push(Some(initial));
        self.disabled.push(false);
        ResourceId(self.num_resources as u32 - 1)
    }

    pub fn add_state(&mut self) -> StateId {
        self.num_states += 1;
        StateId(self.num_states as u32 - 1)
    }

    pub fn add_op(&mut self, is_task: bool) -> OpId {
        self.num_ops += 1;
        self.tasks.push(is_task);
        self.cancelled.push(false);
        OpId(self.num_ops as u32 - 1)
    }

    pub fn mark_task(&mut self, op: OpId) {
        if let Some(t) = self.tasks.get_mut(op.index()) {
            *t = true;
        }
    }

    pub fn precede(&mut self, before: OpId, after: OpId) {
        self.precedence.push((before, after));
    }

    pub fn set_duration(&mut self, state: StateId, op: OpId, dist: DurationDist) {
        self.durations.insert((state, op), dist);
    }

    pub fn set_effect(&mut self, state: StateId, op: OpId, dist: EffectDist) {
        self.effects.insert((state, op), dist);
    }

    /// Sets both duration and effect for one (state, operation) pair.
    pub fn capability(&mut self, state: StateId, op: OpId, duration: DurationDist, effect: EffectDist) {
        self.set_duration(state, op, duration);
        self.set_effect(state, op, effect);
    }

    /// Deterministic convenience: fixed duration, state unchanged.
    pub fn fixed(&mut self, state: StateId, op: OpId, duration: u32) {
        let d = DurationDist::point(duration).expect("durations are positive");
        self.capability(state, op, d, StateDist::point(state));
    }

    pub fn set_initial(&mut self, resource: ResourceId, dist: InitialDist) {
        if let Some(slot) = self.initial.get_mut(resource.index()) {
            *slot = Some(dist);
        }
    }

    pub fn set_non_task_cap(&mut self, cap: u32) {
        self.non_task_cap = Some(cap);
    }

    pub fn build(self) -> RapInstance {
        let n_ops = self.num_ops;
        let n_states = self.num_states;
        let tasks: Vec<OpId> = (0..n_ops as u32).map(OpId).filter(|o| self.tasks[o.index()]).collect();

        let mut preds = vec![Vec::new(); n_ops];
        let mut succs = vec![Vec::new(); n_ops];
        for &(u, v) in &self.precedence {
            if u.index() < n_ops && v.index() < n_ops {
                if !preds[v.index()].contains(&u) {
                    preds[v.index()].push(u);
                }
                if !succs[u.index()].contains(&v) {
                    succs[u.index()].push(v);
                }
            }
        }

        let mut cap_index = vec![NO_CAP; n_states * n_ops];
        let mut caps = Vec::new();
        let mut ops_by_state = vec![Vec::new(); n_states];
        let mut keys: Vec<&(StateId, OpId)> = self.durations.keys().collect();
        keys.sort();
        for key in keys {
            let &(s, o) = key;
            if s.index() >= n_states || o.index() >= n_ops {
                continue;
            }
            let Some(effect) = self.effects.get(key) else { continue };
            let effect_ok = effect.support().iter().all(|&(e, _)| e.index() < n_states);
            if !effect_ok {
                continue;
            }
            cap_index[s.index() * n_ops + o.index()] = caps.len() as u32;
            caps.push(Capability { duration: self.durations[key].clone(), effect: effect.clone() });
            ops_by_state[s.index()].push(o);
        }

        let initial: Vec<InitialDist> = self
            .initial
            .into_iter()
            .map(|d| d.unwrap_or_else(|| StateDist::from_raw(Vec::new())))
            .collect();

        let mut max_duration_sum = 0u64;
        let mut expected_duration_sum = 0.0;
        for o in 0..n_ops {
            let mut max_d = 0u32;
            let mut mean_sum = 0.0;
            let mut count = 0usize;
            for s in 0..n_states {
                let i = cap_index[s * n_ops + o];
                if i != NO_CAP {
                    let d = &caps[i as usize].duration;
                    max_d = max_d.max(d.max());
                    mean_sum += d.mean();
                    count += 1;
                }
            }
            max_duration_sum += max_d as u64;
            if self.tasks[o] && count > 0 {
                expected_duration_sum += mean_sum / count as f64;
            }
        }

        let non_task_cap = self.non_task_cap.unwrap_or(2 * n_ops as u32);

        RapInstance {
            num_resources: self.num_resources,
            num_states: n_states,
            num_ops: n_ops,
            is_task: self.tasks,
            tasks,
            precedence: self.precedence,
            preds,
            succs,
            durations: self.durations,
            effects: self.effects,
            initial,
            cap_index,
            caps,
            ops_by_state,
            disabled: self.disabled,
            cancelled: self.cancelled,
            non_task_cap,
            max_duration_sum,
            expected_duration_sum,
        }
    }
}
