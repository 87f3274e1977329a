//! Task clustering by weighted expected slack, and cluster-by-cluster
//! training with earlier clusters' policies frozen.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;
use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{schedule_from, ControlAction, Env, EnvState, Status};
use crate::features::{FeatureMode, FeatureSchema};
use crate::learner::{base_policy_action, FrozenControl, Learner, LearnerConfig, LearnerError, TrainOptions};
use crate::rap::{OpId, RapInstance, Schedule, TaskWindow};
use crate::store::QValueStore;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClusterError {
    #[error("cluster size must be at least 1")]
    TargetSize,
    #[error("{0} has no release/due dates; attach a job table from the benchmark layer")]
    MissingWindow(OpId),
    #[error("{0} has no capable resource state")]
    NoCapability(OpId),
    #[error("weights for {task}: expected {expected}, got {got}")]
    Weights { task: OpId, expected: usize, got: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// `S_w(v) = Σ_{s ∈ Γ(v)} w(s) · E[B(v) − A(v) − D(s, v)]`, with uniform
/// weights by default. `weights` follow the order of
/// [`RapInstance::capable_states`].
pub fn weighted_expected_slack(
    instance: &RapInstance,
    task: OpId,
    window: Option<TaskWindow>,
    weights: Option<&[f64]>,
) -> Result<f64, ClusterError> {
    let window = window.ok_or(ClusterError::MissingWindow(task))?;
    let states = instance.capable_states(task);
    if states.is_empty() {
        return Err(ClusterError::NoCapability(task));
    }
    let uniform = vec![1.0 / states.len() as f64; states.len()];
    let w = weights.unwrap_or(&uniform);
    if w.len() != states.len() {
        return Err(ClusterError::Weights { task, expected: states.len(), got: w.len() });
    }
    let span = window.due as f64 - window.release as f64;
    Ok(states
        .iter()
        .zip(w)
        .map(|(&s, &ws)| ws * (span - instance.duration(s, task).expect("capable state").mean()))
        .sum())
}

fn mean_duration(instance: &RapInstance, task: OpId) -> f64 {
    let states = instance.capable_states(task);
    if states.is_empty() {
        return 0.0;
    }
    states.iter().map(|&s| instance.duration(s, task).unwrap().mean()).sum::<f64>() / states.len() as f64
}

/// Slack for instances without due dates: critical path length minus the
/// earliest start bound (expected durations, uniform over capable states).
pub fn horizon_slacks(instance: &RapInstance) -> Vec<(OpId, f64)> {
    let order = topological_order(instance, |_| 0.0);
    let mut earliest = vec![0.0f64; instance.num_ops()];
    let mut horizon = 0.0f64;
    for &t in &order {
        let start = instance
            .predecessors(t)
            .iter()
            .map(|p| earliest[p.index()] + mean_duration(instance, *p))
            .fold(0.0, f64::max);
        earliest[t.index()] = start;
        horizon = horizon.max(start + mean_duration(instance, t));
    }
    order.into_iter().map(|t| (t, horizon - earliest[t.index()])).collect()
}

/// Slacks from per-task windows; tasks without windows are an error.
pub fn window_slacks(
    instance: &RapInstance,
    window: impl Fn(OpId) -> Option<TaskWindow>,
) -> Result<Vec<(OpId, f64)>, ClusterError> {
    instance.active_tasks().map(|t| Ok((t, weighted_expected_slack(instance, t, window(t), None)?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Priority(f64);

impl Eq for Priority {}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Precedence-respecting order over the active tasks: repeatedly takes the
/// released task with the smallest priority, ties by id.
fn topological_order(instance: &RapInstance, priority: impl Fn(OpId) -> f64) -> Vec<OpId> {
    let active: Vec<OpId> = instance.active_tasks().collect();
    let mut is_active = FixedBitSet::with_capacity(instance.num_ops());
    for t in &active {
        is_active.insert(t.index());
    }
    let mut missing = vec![0usize; instance.num_ops()];
    for &t in &active {
        missing[t.index()] = instance.predecessors(t).iter().filter(|p| is_active.contains(p.index())).count();
    }
    let mut heap: BinaryHeap<Reverse<(Priority, OpId)>> =
        active.iter().filter(|t| missing[t.index()] == 0).map(|&t| Reverse((Priority(priority(t)), t))).collect();
    let mut order = Vec::with_capacity(active.len());
    while let Some(Reverse((_, t))) = heap.pop() {
        order.push(t);
        for &s in instance.successors(t) {
            if is_active.contains(s.index()) {
                missing[s.index()] -= 1;
                if missing[s.index()] == 0 {
                    heap.push(Reverse((Priority(priority(s)), s)));
                }
            }
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPlan {
    pub clusters: Vec<Vec<OpId>>,
    pub target_size: usize,
    pub slacks: Vec<(OpId, f64)>,
}

impl ClusterPlan {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, task: OpId) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&task))
    }

    /// `cluster,task,slack` rows with a header.
    pub fn to_csv(&self) -> String {
        let slack: HashMap<OpId, f64> = self.slacks.iter().copied().collect();
        let mut out = String::from("cluster,task,slack\n");
        for (i, c) in self.clusters.iter().enumerate() {
            for t in c {
                out.push_str(&format!("{i},{},{}\n", t.0, slack.get(t).copied().unwrap_or(f64::NAN)));
            }
        }
        out
    }
}

/// Orders tasks by slack within the precedence freedom and cuts the order
/// into clusters of `target_size` (the last may be smaller).
pub fn build_clusters(instance: &RapInstance, slacks: &[(OpId, f64)], target_size: usize) -> Result<ClusterPlan, ClusterError> {
    if target_size == 0 {
        return Err(ClusterError::TargetSize);
    }
    let map: HashMap<OpId, f64> = slacks.iter().copied().collect();
    let order = topological_order(instance, |t| map.get(&t).copied().unwrap_or(f64::INFINITY));
    let clusters = order.chunks(target_size).map(<[OpId]>::to_vec).collect();
    Ok(ClusterPlan { clusters, target_size, slacks: slacks.to_vec() })
}

/// Target size that splits `num_tasks` into `clusters` near-equal clusters.
pub fn target_size_for(num_tasks: usize, clusters: usize) -> usize {
    num_tasks.div_ceil(clusters.max(1)).max(1)
}

type SharedStore = Arc<dyn QValueStore + Send + Sync>;

struct FrozenCluster {
    tasks: FixedBitSet,
    scope: FixedBitSet,
    schema: FeatureSchema,
    store: SharedStore,
}

/// Greedy policies of finished clusters, memoized per state, with
/// base-policy fallback where no stored decision exists.
pub struct FrozenPolicies {
    clusters: Vec<FrozenCluster>,
    memo: Mutex<HashMap<(EnvState, bool), Option<ControlAction>>>,
    fallbacks: AtomicU64,
}

const MEMO_LIMIT: usize = 1 << 20;

impl FrozenPolicies {
    pub fn new() -> Self {
        Self { clusters: Vec::new(), memo: Mutex::new(HashMap::new()), fallbacks: AtomicU64::new(0) }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Base-policy fallbacks taken so far.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// Adds a trained cluster; `scope` is every task visible while it trained.
    pub fn push(&mut self, tasks: &[OpId], scope: &[OpId], schema: FeatureSchema, store: SharedStore) {
        let n = scope.iter().map(|t| t.index() + 1).max().unwrap_or(0);
        let bits = |ts: &[OpId]| {
            let mut b = FixedBitSet::with_capacity(n);
            for t in ts {
                b.insert(t.index());
            }
            b
        };
        self.clusters.push(FrozenCluster { tasks: bits(tasks), scope: bits(scope), schema, store });
        self.memo.lock().clear();
    }

    fn owner(&self, state: &EnvState, action: ControlAction) -> Option<usize> {
        let op = match action {
            ControlAction::Wait => return None,
            ControlAction::Assign { op, .. } | ControlAction::SelectTask(op) => op,
            ControlAction::SelectResource(_) => state.pending?,
        };
        self.clusters.iter().position(|c| c.tasks.contains(op.index()))
    }

    fn project(cluster: &FrozenCluster, schema_instance: &RapInstance, state: &EnvState) -> EnvState {
        let mut x = state.clone();
        for rs in &mut x.resources {
            if let Some(op) = rs.running {
                if schema_instance.is_task(op) && !cluster.scope.contains(op.index()) {
                    rs.running = None;
                    rs.start = 0;
                }
            }
        }
        x
    }

    fn compute(&self, env: &Env, state: &EnvState, actions: &[ControlAction], force: bool) -> Option<ControlAction> {
        let mut rng = ChaCha8Rng::seed_from_u64(state_seed(state));
        let owned_by = |i: usize| -> Vec<ControlAction> {
            actions.iter().copied().filter(|&a| self.owner(state, a) == Some(i)).collect()
        };
        let wait_legal = actions.contains(&ControlAction::Wait);
        for (i, c) in self.clusters.iter().enumerate() {
            let owned = owned_by(i);
            if owned.is_empty() {
                continue;
            }
            let x = Self::project(c, env.instance(), state);
            let base = c.schema.extract_state(&x);
            let mut best: Option<(ControlAction, f64)> = None;
            let candidates = owned.iter().copied().chain(wait_legal.then_some(ControlAction::Wait));
            for a in candidates {
                if let Some(q) = c.store.lookup(&c.schema.with_action(&base, &x, a)) {
                    if best.map_or(true, |(_, b)| q < b) {
                        best = Some((a, q));
                    }
                }
            }
            let pending_here = state.pending.is_some_and(|p| c.tasks.contains(p.index()));
            match best {
                Some((ControlAction::Wait, _)) if !pending_here => continue,
                Some((ControlAction::Wait, _)) | None => {
                    self.fallbacks.fetch_add(1, Ordering::Relaxed);
                    return Some(base_policy_action(env, state, &owned, &mut rng));
                }
                Some((a, _)) => return Some(a),
            }
        }
        if force {
            let owned: Vec<ControlAction> = actions.iter().copied().filter(|&a| self.owner(state, a).is_some()).collect();
            if !owned.is_empty() {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                return Some(base_policy_action(env, state, &owned, &mut rng));
            }
        }
        None
    }
}

impl Default for FrozenPolicies {
    fn default() -> Self {
        Self::new()
    }
}

fn state_seed(state: &EnvState) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    state.hash(&mut h);
    h.finish()
}

impl FrozenControl for FrozenPolicies {
    fn decide(&self, env: &Env, state: &EnvState, actions: &[ControlAction], force: bool) -> Option<ControlAction> {
        if self.clusters.is_empty() {
            return None;
        }
        let key = (state.clone(), force);
        if let Some(&a) = self.memo.lock().get(&key) {
            return a;
        }
        let a = self.compute(env, state, actions, force);
        let mut memo = self.memo.lock();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, a);
        a
    }

    fn owns(&self, state: &EnvState, action: ControlAction) -> bool {
        self.owner(state, action).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub index: usize,
    pub tasks: usize,
    pub episodes: usize,
    pub secs: f64,
    /// Greedy cost over the tasks visible during this cluster's training.
    pub greedy_cost: f64,
    pub learner_decisions: usize,
}

pub struct ClusteredRun {
    pub policy: Arc<FrozenPolicies>,
    pub clusters: Vec<ClusterReport>,
    pub elapsed: Duration,
}

impl ClusteredRun {
    pub fn fallbacks(&self) -> u64 {
        self.policy.fallbacks()
    }
}

/// Trains each cluster in turn, exposing tasks of clusters `1..=j` and
/// freezing the greedy policy of every finished cluster.
pub fn sequential_train<S, F>(
    plan: &ClusterPlan,
    env: &Env,
    mode: FeatureMode,
    config: &LearnerConfig,
    options: &TrainOptions,
    mut make_store: F,
) -> Result<ClusteredRun, ClusterError>
where
    S: QValueStore + Send + Sync + 'static,
    F: FnMut(&FeatureSchema) -> S,
{
    let start = Instant::now();
    let mut frozen = FrozenPolicies::new();
    let mut reports = Vec::with_capacity(plan.len());
    let mut scope: Vec<OpId> = Vec::new();
    for (j, cluster) in plan.clusters.iter().enumerate() {
        let t0 = Instant::now();
        scope.extend_from_slice(cluster);
        let env_j = env.with_task_mask(&scope);
        let schema = FeatureSchema::with_tasks(env.instance_arc().clone(), mode, scope.clone());
        let mut store = make_store(&schema);
        let frozen_arc = Arc::new(std::mem::take(&mut frozen));
        let cfg = LearnerConfig { seed: config.seed.wrapping_add(j as u64), ..config.clone() };
        let mut learner = Learner::new(env_j, schema.clone(), cfg)?;
        if !frozen_arc.is_empty() {
            learner = learner.with_frozen(frozen_arc.clone());
        }
        let report = learner.train(&mut store, options)?;
        let greedy = learner.greedy_episode(&store)?;
        drop(learner);
        frozen = Arc::try_unwrap(frozen_arc).unwrap_or_else(|_| unreachable!("learner dropped"));
        reports.push(ClusterReport {
            index: j,
            tasks: cluster.len(),
            episodes: report.curve.len(),
            secs: t0.elapsed().as_secs_f64(),
            greedy_cost: greedy.total_cost,
            learner_decisions: greedy.steps.len(),
        });
        frozen.push(cluster, &scope, schema, Arc::new(store));
    }
    Ok(ClusteredRun { policy: Arc::new(frozen), clusters: reports, elapsed: start.elapsed() })
}

/// One episode driven entirely by frozen policies (waits where none acts).
pub fn composite_episode<R: rand::Rng>(env: &Env, policy: &FrozenPolicies, rng: &mut R) -> (f64, Schedule, Status) {
    let initial = env.initial_state(rng);
    let mut x = initial.clone();
    let mut total = 0.0;
    let mut completions = Vec::new();
    let cap = 10 * env.decision_bound();
    for _ in 0..cap {
        if env.status(&x) != Status::Running {
            break;
        }
        let actions = env.actions(&x);
        let a = policy
            .decide(env, &x, &actions, false)
            .or_else(|| actions.contains(&ControlAction::Wait).then_some(ControlAction::Wait))
            .or_else(|| policy.decide(env, &x, &actions, true))
            .unwrap_or(actions[0]);
        let out = env.decide(&x, a, rng);
        total += out.cost;
        completions.extend(out.finished);
        x = out.next;
    }
    (total, schedule_from(&initial, &completions), env.status(&x))
}

/// Mean composite cost over `runs` episodes (one on deterministic
/// instances).
pub fn evaluate_composite(env: &Env, policy: &FrozenPolicies, runs: usize, seed: u64) -> f64 {
    let runs = if env.instance().is_deterministic() { 1 } else { runs.max(1) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs).map(|_| composite_episode(env, policy, &mut rng).0).sum::<f64>() / runs as f64
}
