//! State-action feature vectors.
//!
//! Layout for both modes: per resource (state id, executing op, relative
//! elapsed time), then one block per covered task, then the action's
//! resource and operation. Packed mode codes each task as one digit
//! (0 unavailable, 1 ready, 2 running, 3 finished); one-hot mode expands it
//! into four indicators.

use std::sync::Arc;

use crate::env::{ControlAction, EnvState};
use crate::rap::{OpId, RapInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    Packed,
    OneHot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Task status digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskCode {
    Unavailable = 0,
    Ready = 1,
    Running = 2,
    Finished = 3,
}

#[derive(Debug, Clone)]
pub struct FeatureSchema {
    mode: FeatureMode,
    instance: Arc<RapInstance>,
    tasks: Vec<OpId>,
    horizon: u32,
    model_aware: bool,
    radices: Vec<u64>,
    names: Vec<String>,
}

impl FeatureSchema {
    /// Schema over every task of the instance with the default horizon.
    pub fn new(instance: Arc<RapInstance>, mode: FeatureMode) -> Self {
        let tasks = instance.tasks().to_vec();
        Self::with_tasks(instance, mode, tasks)
    }

    /// Schema covering only `tasks` (clustered training).
    pub fn with_tasks(instance: Arc<RapInstance>, mode: FeatureMode, tasks: Vec<OpId>) -> Self {
        let horizon = (instance.expected_duration_sum().ceil() as u32).max(1);
        let mut s = Self { mode, instance, tasks, horizon, model_aware: false, radices: Vec::new(), names: Vec::new() };
        s.layout();
        s
    }

    /// Clamp for relative times; radix of time components is `horizon + 1`.
    pub fn horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon.max(1);
        self.layout();
        self
    }

    /// Use expected remaining durations instead of elapsed times.
    pub fn model_aware(mut self, on: bool) -> Self {
        self.model_aware = on;
        self.layout();
        self
    }

    fn layout(&mut self) {
        let inst = &self.instance;
        let mut radices = Vec::new();
        let mut names = Vec::new();
        let time_name = if self.model_aware { "remaining" } else { "elapsed" };
        for r in inst.resources() {
            radices.push(inst.num_states().max(1) as u64);
            names.push(format!("{r}.state"));
            radices.push(inst.num_ops() as u64 + 1);
            names.push(format!("{r}.op"));
            radices.push(self.horizon as u64 + 1);
            names.push(format!("{r}.{time_name}"));
        }
        for t in &self.tasks {
            match self.mode {
                FeatureMode::Packed => {
                    radices.push(4);
                    names.push(format!("{t}.code"));
                }
                FeatureMode::OneHot => {
                    for tag in ["unavailable", "ready", "running", "finished"] {
                        radices.push(2);
                        names.push(format!("{t}.{tag}"));
                    }
                }
            }
        }
        radices.push(inst.num_resources() as u64 + 1);
        names.push("action.resource".into());
        radices.push(inst.num_ops() as u64 + 1);
        names.push("action.op".into());
        self.radices = radices;
        self.names = names;
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn tasks(&self) -> &[OpId] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.radices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radices.is_empty()
    }

    pub fn radices(&self) -> &[u64] {
        &self.radices
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Per-component `(lower, upper)` bounds for [`normalize`].
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.radices.iter().map(|&m| (0.0, (m - 1) as f64)).collect()
    }

    /// `name=radix` lines for experiment metadata.
    pub fn summary(&self) -> String {
        self.names.iter().zip(&self.radices).map(|(n, m)| format!("{n}={m}\n")).collect()
    }

    pub fn task_code(&self, state: &EnvState, task: OpId) -> TaskCode {
        if state.is_finished(task) || !state.unfinished.contains(task.index()) && !state.started.contains(task.index()) {
            // out-of-scope tasks read as finished
            return TaskCode::Finished;
        }
        if state.started.contains(task.index()) {
            return TaskCode::Running;
        }
        let ready = self.instance.predecessors(task).iter().all(|p| !state.unfinished.contains(p.index()));
        if ready {
            TaskCode::Ready
        } else {
            TaskCode::Unavailable
        }
    }

    /// State part of the vector (everything except the two action
    /// components).
    pub fn extract_state(&self, state: &EnvState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for rs in &state.resources {
            v.push(rs.state.0 as f64);
            match rs.running {
                None => {
                    v.push(0.0);
                    v.push(0.0);
                }
                Some(op) => {
                    v.push(op.0 as f64 + 1.0);
                    let elapsed = state.now - rs.start;
                    let t = if self.model_aware {
                        self.expected_remaining(rs.state, op, elapsed)
                    } else {
                        elapsed
                    };
                    v.push(t.min(self.horizon) as f64);
                }
            }
        }
        for &t in &self.tasks {
            let code = self.task_code(state, t);
            match self.mode {
                FeatureMode::Packed => v.push(code as u8 as f64),
                FeatureMode::OneHot => {
                    for c in 0..4u8 {
                        v.push(if code as u8 == c { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        v
    }

    fn expected_remaining(&self, state: crate::rap::StateId, op: OpId, elapsed: u32) -> u32 {
        let Some(d) = self.instance.duration(state, op) else { return 0 };
        let (mut num, mut den) = (0.0, 0.0);
        for &(k, p) in d.support() {
            if k >= elapsed {
                num += p * (k - elapsed) as f64;
                den += p;
            }
        }
        if den > 0.0 {
            (num / den).round() as u32
        } else {
            0
        }
    }

    /// Appends the action components to a state part.
    pub fn with_action(&self, state_part: &[f64], state: &EnvState, action: ControlAction) -> FeatureVector {
        let (r, o) = match action {
            ControlAction::Wait => (0, 0),
            ControlAction::Assign { op, resource } => (resource.0 + 1, op.0 + 1),
            ControlAction::SelectTask(op) => (0, op.0 + 1),
            ControlAction::SelectResource(resource) => {
                (resource.0 + 1, state.pending.map_or(0, |p| p.0 + 1))
            }
        };
        let mut values = Vec::with_capacity(self.len());
        values.extend_from_slice(state_part);
        values.push(r as f64);
        values.push(o as f64);
        FeatureVector { values }
    }

    pub fn extract(&self, state: &EnvState, action: ControlAction) -> FeatureVector {
        self.with_action(&self.extract_state(state), state, action)
    }
}

/// Maps each component affinely onto [0, 1], clamping out-of-range values.
/// Components with equal bounds map to 0.
pub fn normalize(vector: &FeatureVector, bounds: &[(f64, f64)]) -> FeatureVector {
    let values = vector
        .values
        .iter()
        .zip(bounds)
        .map(|(&x, &(lo, hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    FeatureVector { values }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::env::{Env, EnvConfig};
    use crate::rap::{encode_jsp, JobShop, PerformanceMeasure, ResourceId};

    fn setup() -> (Env, FeatureSchema) {
        let shop = JobShop::classical(2, vec![vec![(0, 3), (1, 2)], vec![(1, 2)]]);
        let inst = Arc::new(encode_jsp(&shop).unwrap().instance);
        let env = Env::new(inst.clone(), PerformanceMeasure::makespan(), EnvConfig::default()).unwrap();
        (env, FeatureSchema::new(inst, FeatureMode::Packed))
    }

    #[test]
    fn packed_length() {
        let (_, schema) = setup();
        assert_eq!(schema.len(), 3 * 2 + 3 + 2);
        let one_hot = FeatureSchema::new(schema.instance.clone(), FeatureMode::OneHot);
        assert_eq!(one_hot.len(), 3 * 2 + 4 * 3 + 2);
    }

    #[test]
    fn idle_resource_and_time_shift() {
        let (env, schema) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x0 = env.initial_state(&mut rng);
        let a = ControlAction::Assign { op: OpId(0), resource: ResourceId(0) };
        let v = schema.extract(&x0, a);
        assert_eq!(&v.values[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&v.values[9..], &[1.0, 1.0]);
        let x1 = env.step(&x0, a, &mut rng).next;
        let mut shifted = x1.clone();
        shifted.now += 10;
        for r in &mut shifted.resources {
            if r.running.is_some() {
                r.start += 10;
            }
        }
        assert_eq!(schema.extract(&x1, ControlAction::Wait), schema.extract(&shifted, ControlAction::Wait));
        for (x, m) in schema.extract(&x1, ControlAction::Wait).values.iter().zip(schema.radices()) {
            assert!(*x < *m as f64);
        }
    }

    #[test]
    fn one_hot_block_has_single_one() {
        let (env, packed) = setup();
        let schema = FeatureSchema::new(packed.instance.clone(), FeatureMode::OneHot);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x0 = env.initial_state(&mut rng);
        let v = schema.extract(&x0, ControlAction::Wait);
        for t in 0..3 {
            let block = &v.values[6 + 4 * t..10 + 4 * t];
            assert_eq!(block.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn normalize_bounds() {
        let v = FeatureVector { values: vec![0.0, 4.0, 7.0, 3.0, 0.5] };
        let bounds = [(0.0, 4.0), (0.0, 4.0), (0.0, 4.0), (3.0, 3.0), (0.0, 1.0)];
        let n = normalize(&v, &bounds);
        assert_eq!(n.values, vec![0.0, 1.0, 1.0, 0.0, 0.5]);
        let unit = [(0.0, 1.0); 5];
        assert_eq!(normalize(&n, &unit), n);
    }
}
