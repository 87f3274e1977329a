//! Resource allocator functions (schedules) and the feasibility check.
//!
//! The state of resource `r` at time `t`, `s(r, t)`, is the state after every
//! entry of `r` starting at or before `t` took effect; `s(r, -1)` is the
//! initial state. An entry starting at `t` runs from `s(r, t - 1)`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{OpId, RapInstance, ResourceId, StateId};

/// One entry of a schedule: `op` runs on `resource` from `start` for the
/// realized `duration`. `end_state` fixes the realized effect; it may be
/// omitted when the effect is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub resource: ResourceId,
    pub start: u32,
    pub op: OpId,
    pub duration: u32,
    pub end_state: Option<StateId>,
}

impl ScheduleEntry {
    pub fn finish(&self) -> u32 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("resource {resource} already has an entry at time {start}")]
    DuplicateKey { resource: ResourceId, start: u32 },
    #[error("realized durations must be positive (entry {op} at {resource}/{start})")]
    ZeroDuration { resource: ResourceId, start: u32, op: OpId },
    #[error("{op} cannot be executed from state {state} (entry {resource}/{start})")]
    InvalidAssignment { resource: ResourceId, start: u32, op: OpId, state: StateId },
    #[error("no realization given for the stochastic {what} of {resource}")]
    Unrealized { what: &'static str, resource: ResourceId },
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
}

/// A partial map `(resource, start) -> operation` with one realization
/// of durations, effects and initial states.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    entries: BTreeMap<(ResourceId, u32), ScheduleEntry>,
    initial: Option<Vec<StateId>>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixes the realized initial state of every resource.
    pub fn with_initial(mut self, states: Vec<StateId>) -> Self {
        self.initial = Some(states);
        self
    }

    pub fn set_initial(&mut self, states: Vec<StateId>) {
        self.initial = Some(states);
    }

    pub fn insert(&mut self, resource: ResourceId, start: u32, op: OpId, duration: u32) -> Result<(), ScheduleError> {
        self.insert_entry(ScheduleEntry { resource, start, op, duration, end_state: None })
    }

    pub fn insert_entry(&mut self, entry: ScheduleEntry) -> Result<(), ScheduleError> {
        if entry.duration == 0 {
            return Err(ScheduleError::ZeroDuration { resource: entry.resource, start: entry.start, op: entry.op });
        }
        let key = (entry.resource, entry.start);
        if self.entries.contains_key(&key) {
            return Err(ScheduleError::DuplicateKey { resource: entry.resource, start: entry.start });
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn remove(&mut self, resource: ResourceId, start: u32) -> Option<ScheduleEntry> {
        self.entries.remove(&(resource, start))
    }

    pub fn get(&self, resource: ResourceId, start: u32) -> Option<&ScheduleEntry> {
        self.entries.get(&(resource, start))
    }

    pub fn get_mut(&mut self, resource: ResourceId, start: u32) -> Option<&mut ScheduleEntry> {
        self.entries.get_mut(&(resource, start))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ordered by (resource, start).
    pub fn entries(&self) -> impl Iterator<Item = &ScheduleEntry> + '_ {
        self.entries.values()
    }

    fn resource_entries(&self, resource: ResourceId) -> impl Iterator<Item = &ScheduleEntry> + '_ {
        self.entries.range((resource, 0)..=(resource, u32::MAX)).map(|(_, e)| e)
    }

    fn initial_state(&self, instance: &RapInstance, resource: ResourceId) -> Result<StateId, ScheduleError> {
        if resource.index() >= instance.num_resources() {
            return Err(ScheduleError::UnknownResource(resource));
        }
        if let Some(states) = &self.initial {
            if let Some(&s) = states.get(resource.index()) {
                return Ok(s);
            }
        }
        let init = instance.initial(resource);
        match init.support() {
            [(s, _)] => Ok(*s),
            _ => Err(ScheduleError::Unrealized { what: "initial state", resource }),
        }
    }

    fn realized_effect(instance: &RapInstance, entry: &ScheduleEntry, pre: StateId) -> Result<StateId, ScheduleError> {
        let effect = instance.effect(pre, entry.op).ok_or(ScheduleError::InvalidAssignment {
            resource: entry.resource,
            start: entry.start,
            op: entry.op,
            state: pre,
        })?;
        match (entry.end_state, effect.support()) {
            (Some(s), _) => Ok(s),
            (None, [(s, _)]) => Ok(*s),
            (None, _) => Err(ScheduleError::Unrealized { what: "effect", resource: entry.resource }),
        }
    }

    /// All entries with their realized effects filled in, ordered by
    /// (resource, start).
    pub(crate) fn resolved(&self, instance: &RapInstance) -> Result<Vec<ScheduleEntry>, ScheduleError> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut current: Option<(ResourceId, StateId)> = None;
        for entry in self.entries.values() {
            let pre = match current {
                Some((r, s)) if r == entry.resource => s,
                _ => self.initial_state(instance, entry.resource)?,
            };
            let post = Self::realized_effect(instance, entry, pre)?;
            out.push(ScheduleEntry { end_state: Some(post), ..*entry });
            current = Some((entry.resource, post));
        }
        Ok(out)
    }
}

/// `s(r, t)`: the state of `resource` once every entry starting at or before
/// `time` has taken effect.
pub fn resource_state_at(
    instance: &RapInstance,
    schedule: &Schedule,
    resource: ResourceId,
    time: u32,
) -> Result<StateId, ScheduleError> {
    let mut state = schedule.initial_state(instance, resource)?;
    for entry in schedule.resource_entries(resource).take_while(|e| e.start <= time) {
        state = Schedule::realized_effect(instance, entry, state)?;
    }
    Ok(state)
}

/// `s(r, t - 1)`: the state an entry starting at `time` executes from.
pub fn state_before(
    instance: &RapInstance,
    schedule: &Schedule,
    resource: ResourceId,
    time: u32,
) -> Result<StateId, ScheduleError> {
    match time.checked_sub(1) {
        Some(t) => resource_state_at(instance, schedule, resource, t),
        None => schedule.initial_state(instance, resource),
    }
}

/// A violated feasibility property. [`Violation::tag`] gives its number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// 1: a task is not assigned to exactly one (resource, time) pair.
    TaskCount { task: OpId, count: usize },
    /// 2: two operations overlap on one resource.
    Overlap { resource: ResourceId, first: u32, second: u32 },
    /// 3: `after` starts before `before` has finished.
    Precedence { before: OpId, after: OpId },
    /// 4: the operation is not executable from the resource's state.
    Capability { resource: ResourceId, start: u32, op: OpId, state: StateId },
}

impl Violation {
    pub fn tag(&self) -> u8 {
        match self {
            Violation::TaskCount { .. } => 1,
            Violation::Overlap { .. } => 2,
            Violation::Precedence { .. } => 3,
            Violation::Capability { .. } => 4,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TaskCount { task, count } => write!(f, "[1] task {task} scheduled {count} times"),
            Violation::Overlap { resource, first, second } => {
                write!(f, "[2] entries at {first} and {second} overlap on {resource}")
            }
            Violation::Precedence { before, after } => write!(f, "[3] {after} starts before {before} finishes"),
            Violation::Capability { resource, start, op, state } => {
                write!(f, "[4] {op} at {resource}/{start} is not executable from {state}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn tags(&self) -> Vec<u8> {
        let mut tags: Vec<u8> = self.violations.iter().map(Violation::tag).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }
}

/// Checks the four feasibility properties of a complete solution under the
/// schedule's realization. Errors only when a stochastic initial state or
/// effect has no realization.
pub fn check_feasibility(instance: &RapInstance, schedule: &Schedule) -> Result<Feasibility, ScheduleError> {
    let mut violations = Vec::new();

    let mut count = vec![0usize; instance.num_ops()];
    let mut finish = vec![None::<u32>; instance.num_ops()];
    let mut start = vec![None::<u32>; instance.num_ops()];
    for e in schedule.entries() {
        if let Some(c) = count.get_mut(e.op.index()) {
            *c += 1;
            start[e.op.index()] = Some(start[e.op.index()].map_or(e.start, |s: u32| s.min(e.start)));
            finish[e.op.index()] = Some(finish[e.op.index()].map_or(e.finish(), |f: u32| f.max(e.finish())));
        }
    }
    for &t in instance.tasks() {
        let c = count[t.index()];
        let expected = usize::from(!instance.is_cancelled(t));
        if c != expected {
            violations.push(Violation::TaskCount { task: t, count: c });
        }
    }

    let mut prev: Option<&ScheduleEntry> = None;
    for e in schedule.entries() {
        if let Some(p) = prev {
            if p.resource == e.resource && p.finish() > e.start {
                violations.push(Violation::Overlap { resource: e.resource, first: p.start, second: e.start });
            }
        }
        prev = Some(e);
    }

    for &(u, v) in instance.precedence() {
        if let (Some(fu), Some(sv)) = (finish.get(u.index()).copied().flatten(), start.get(v.index()).copied().flatten()) {
            if sv < fu {
                violations.push(Violation::Precedence { before: u, after: v });
            }
        }
    }

    // Walk each resource's state sequence; an inapplicable entry leaves the
    // state unchanged so later entries are still checked.
    let mut current: Option<(ResourceId, StateId)> = None;
    for e in schedule.entries() {
        let pre = match current {
            Some((r, s)) if r == e.resource => s,
            _ => schedule.initial_state(instance, e.resource)?,
        };
        let post = match Schedule::realized_effect(instance, e, pre) {
            Ok(s) => s,
            Err(ScheduleError::InvalidAssignment { .. }) => {
                violations.push(Violation::Capability { resource: e.resource, start: e.start, op: e.op, state: pre });
                pre
            }
            Err(err) => return Err(err),
        };
        current = Some((e.resource, post));
    }

    Ok(Feasibility { violations })
}
