//! Unexpected events during learning: breakdowns, new machines, new jobs and
//! cancellations, with the learner either continuing on its current value
//! function or restarting from scratch.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::env::{Env, EnvConfig, EnvError};
use crate::features::{FeatureMode, FeatureSchema};
use crate::learner::{Learner, LearnerConfig, LearnerError};
use crate::rap::{DurationDist, JobTable, OpId, PerformanceMeasure, RapInstance, ResourceId, TaskWindow};
use crate::rap::{StateDist, StateId};
use crate::store::QValueStore;

#[derive(Debug, Clone, PartialEq)]
pub struct NewJob {
    /// Chain of operations, each with `(state, duration)` alternatives.
    pub ops: Vec<Vec<(StateId, u32)>>,
    pub window: Option<TaskWindow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    Breakdown(ResourceId),
    /// A new machine starting in the same state distribution as `template`.
    NewResource { template: ResourceId },
    NewJob(NewJob),
    Cancellation { job: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfterEvent {
    /// Keep learning with the current value function.
    Continue,
    /// Discard the value function and start learning again.
    Restart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceEvent {
    /// Episode index at which the event takes effect.
    pub trigger: usize,
    pub kind: DisturbanceKind,
    pub mode: AfterEvent,
}

impl DisturbanceEvent {
    pub const DEFAULT_TRIGGER: usize = 100;

    pub fn new(kind: DisturbanceKind, mode: AfterEvent) -> Self {
        Self { trigger: Self::DEFAULT_TRIGGER, kind, mode }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DisturbError {
    #[error("trigger episode must be at least 1")]
    Trigger,
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("unknown job {0}")]
    UnknownJob(usize),
    #[error("new job: {0}")]
    BadJob(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// An instance together with its job structure.
#[derive(Debug, Clone)]
pub struct Plant {
    pub instance: Arc<RapInstance>,
    pub jobs: Arc<JobTable>,
}

impl Plant {
    /// Jobs without dates; windows are left open.
    pub fn from_chains(instance: RapInstance, jobs: Vec<Vec<OpId>>) -> Self {
        let windows = vec![TaskWindow { release: 0, due: u32::MAX }; jobs.len()];
        let table = JobTable::new(instance.num_ops(), jobs, windows);
        Self { instance: Arc::new(instance), jobs: Arc::new(table) }
    }
}

#[derive(Debug, Clone)]
pub struct Applied {
    pub plant: Plant,
    pub warnings: Vec<String>,
}

/// States each resource can ever be in, following effects from its initial
/// support.
fn reachable_states(instance: &RapInstance, resource: ResourceId) -> Vec<bool> {
    let mut seen = vec![false; instance.num_states()];
    let mut queue: VecDeque<StateId> = instance.initial(resource).support().iter().map(|&(s, _)| s).collect();
    while let Some(s) = queue.pop_front() {
        if std::mem::replace(&mut seen[s.index()], true) {
            continue;
        }
        for &op in instance.ops_for_state(s) {
            if let Some(e) = instance.effect(s, op) {
                queue.extend(e.support().iter().map(|&(t, _)| t).filter(|t| !seen[t.index()]));
            }
        }
    }
    seen
}

/// Active tasks that no enabled resource can ever execute.
pub fn stranded_tasks(instance: &RapInstance) -> Vec<OpId> {
    let reach: Vec<Vec<bool>> = instance
        .resources()
        .filter(|&r| !instance.is_disabled(r))
        .map(|r| reachable_states(instance, r))
        .collect();
    instance
        .active_tasks()
        .filter(|&t| !instance.capable_states(t).iter().any(|s| reach.iter().any(|r| r[s.index()])))
        .collect()
}

/// Applies one event. `completed` lists tasks already executed in the real
/// process; they matter only for cancellations.
pub fn inject_disturbance(plant: &Plant, kind: &DisturbanceKind, completed: &[OpId]) -> Result<Applied, DisturbError> {
    let inst = &plant.instance;
    let mut warnings = Vec::new();
    let (instance, jobs) = match kind {
        DisturbanceKind::Breakdown(r) => {
            if r.index() >= inst.num_resources() {
                return Err(DisturbError::UnknownResource(*r));
            }
            let out = inst.with_disabled(*r);
            let stranded = stranded_tasks(&out);
            if !stranded.is_empty() {
                warnings.push(format!("breakdown of {r} leaves {} task(s) without a capable machine", stranded.len()));
            }
            (out, plant.jobs.as_ref().clone())
        }
        DisturbanceKind::NewResource { template } => {
            if template.index() >= inst.num_resources() {
                return Err(DisturbError::UnknownResource(*template));
            }
            let mut b = inst.to_builder();
            b.add_resource(inst.initial(*template).clone());
            (b.build(), plant.jobs.as_ref().clone())
        }
        DisturbanceKind::NewJob(job) => {
            if job.ops.is_empty() {
                return Err(DisturbError::BadJob("no operations".into()));
            }
            let mut b = inst.to_builder();
            let mut ids = Vec::with_capacity(job.ops.len());
            for (k, alts) in job.ops.iter().enumerate() {
                if alts.is_empty() {
                    return Err(DisturbError::BadJob(format!("operation {k} has no alternatives")));
                }
                let op = b.add_op(true);
                for &(s, d) in alts {
                    if s.index() >= inst.num_states() {
                        return Err(DisturbError::BadJob(format!("unknown state {s}")));
                    }
                    let dist = DurationDist::point(d).map_err(|e| DisturbError::BadJob(e.to_string()))?;
                    b.capability(s, op, dist, StateDist::point(s));
                }
                if let Some(&prev) = ids.last() {
                    b.precede(prev, op);
                }
                ids.push(op);
            }
            let instance = b.build();
            let mut all = plant.jobs.jobs.clone();
            all.push(ids);
            let mut windows = plant.jobs.job_windows.clone();
            windows.push(job.window.unwrap_or(TaskWindow { release: 0, due: u32::MAX }));
            let table = JobTable::new(instance.num_ops(), all, windows);
            (instance, table)
        }
        DisturbanceKind::Cancellation { job } => {
            let tasks = plant.jobs.jobs.get(*job).ok_or(DisturbError::UnknownJob(*job))?;
            let open: Vec<OpId> =
                tasks.iter().copied().filter(|t| !completed.contains(t) && !inst.is_cancelled(*t)).collect();
            if open.is_empty() {
                warnings.push(format!("job {job} is already finished; cancellation ignored"));
                return Ok(Applied { plant: plant.clone(), warnings });
            }
            (inst.with_cancelled(&open), plant.jobs.as_ref().clone())
        }
    };
    Ok(Applied { plant: Plant { instance: Arc::new(instance), jobs: Arc::new(jobs) }, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRun {
    /// Training episode costs, the event included at index `trigger`.
    pub costs: Vec<f64>,
    /// Greedy policy cost after each training episode.
    pub greedy: Vec<f64>,
    pub events: Vec<String>,
}

impl DisturbanceRun {
    /// Sum of the greedy policy's error over episodes `from..to` (0-based,
    /// half open).
    pub fn area(&self, optimum: f64, from: usize, to: usize) -> f64 {
        self.greedy[from.min(self.greedy.len())..to.min(self.greedy.len())]
            .iter()
            .map(|&g| super::metrics::relative_error(g, optimum))
            .sum()
    }
}

/// Settings shared by both arms of a disturbance experiment.
pub struct DisturbanceSetup<'a> {
    pub plant: &'a Plant,
    pub measure: &'a dyn Fn(&Arc<JobTable>) -> PerformanceMeasure,
    pub env: EnvConfig,
    pub features: FeatureMode,
    pub learner: &'a LearnerConfig,
    pub episodes: usize,
    /// Greedy evaluation runs per episode on stochastic instances.
    pub eval_runs: usize,
}

/// Trains for `setup.episodes` episodes with `event` applied at its trigger.
pub fn run_with_disturbance<S, F>(
    setup: &DisturbanceSetup<'_>,
    event: &DisturbanceEvent,
    make_store: F,
) -> Result<DisturbanceRun, DisturbError>
where
    S: QValueStore,
    F: Fn(&FeatureSchema) -> S,
{
    if event.trigger == 0 {
        return Err(DisturbError::Trigger);
    }
    let make_env = |p: &Plant| -> Result<(Env, FeatureSchema), DisturbError> {
        let env = Env::new(p.instance.clone(), (setup.measure)(&p.jobs), setup.env)?;
        Ok((env, FeatureSchema::new(p.instance.clone(), setup.features)))
    };
    let (env, schema) = make_env(setup.plant)?;
    let mut learner = Learner::new(env, schema.clone(), setup.learner.clone())?;
    let mut store = make_store(&schema);
    let mut costs = Vec::with_capacity(setup.episodes);
    let mut greedy = Vec::with_capacity(setup.episodes);
    let mut events = Vec::new();
    let trigger = event.trigger.min(setup.episodes);
    for i in 0..trigger {
        costs.push(learner.training_episode(&mut store, i)?.0.cost);
        greedy.push(learner.evaluate_greedy(&store, setup.eval_runs));
    }
    let applied = inject_disturbance(setup.plant, &event.kind, &[])?;
    events.extend(applied.warnings.iter().cloned());
    let (env1, schema1) = make_env(&applied.plant)?;
    let mut offset = 0;
    match event.mode {
        AfterEvent::Continue => {
            if schema1.radices() != schema.radices() {
                events.push("feature layout changed; value store rebuilt".into());
                store = make_store(&schema1);
            }
            learner.replace_env(env1, schema1)?;
        }
        AfterEvent::Restart => {
            learner = Learner::new(env1, schema1.clone(), setup.learner.clone())?;
            store = make_store(&schema1);
            offset = trigger;
        }
    }
    events.push(format!("{:?} at episode {trigger} ({:?})", event.kind, event.mode));
    for i in trigger..setup.episodes {
        costs.push(learner.training_episode(&mut store, i - offset)?.0.cost);
        greedy.push(learner.evaluate_greedy(&store, setup.eval_runs));
    }
    Ok(DisturbanceRun { costs, greedy, events })
}
