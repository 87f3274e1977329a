use std::collections::{HashSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::{argmin, base_policy_action, rollout_estimates, FrozenControl, Policy};
use super::{q_target, q_update, softmin_probabilities, EpisodeTrace, LearnerConfig, LearnerError, TraceStep};
use crate::env::{ControlAction, Env, EnvState, Status};
use crate::features::{FeatureSchema, FeatureVector};
use crate::store::QValueStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub cost: f64,
    /// Softmin temperature; `None` for rollout episodes.
    pub tau: Option<f64>,
    pub wall_secs: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    /// Episodes completed when the greedy policy was evaluated.
    pub episode: usize,
    pub greedy_cost: f64,
    pub wall_secs: f64,
}

/// Stop once the greedy policy is within `threshold` relative error of
/// `reference` (absolute error when the reference is 0), checked every
/// `every` episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub reference: f64,
    pub threshold: f64,
    pub every: usize,
}

impl StopRule {
    pub fn reached(&self, cost: f64) -> bool {
        relative_error(cost, self.reference) <= self.threshold + 1e-12
    }
}

pub(crate) fn relative_error(cost: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (cost - reference) / reference
    } else {
        cost - reference
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    /// Episode counts after which the greedy policy is evaluated.
    pub checkpoints: Vec<usize>,
    pub stop: Option<StopRule>,
    /// Greedy evaluation runs on stochastic instances.
    pub eval_runs: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub curve: Vec<EpisodeRecord>,
    pub checkpoints: Vec<Checkpoint>,
    /// Episode count at which the stop rule fired.
    pub stopped_at: Option<usize>,
    pub elapsed: Duration,
    pub updates: usize,
}

/// One fitted Q-learning agent. Stores are passed per call so that exclusive
/// and shared stores work alike.
pub struct Learner {
    env: Env,
    schema: FeatureSchema,
    config: LearnerConfig,
    deterministic: bool,
    /// Entries rewritten since the plant last changed. Deterministic updates
    /// keep the minimum, except that the first write after a change
    /// overwrites, since old minima may be too optimistic.
    refreshed: Option<HashSet<Vec<u64>>>,
    rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    scale: VecDeque<f64>,
    frozen: Option<Arc<dyn FrozenControl>>,
    rollout_cache: Option<EpisodeTrace>,
    update_log: Option<Vec<usize>>,
}

impl Learner {
    pub fn new(env: Env, schema: FeatureSchema, config: LearnerConfig) -> Result<Self, LearnerError> {
        let expected = 3 * env.instance().num_resources() + 2;
        if schema.len() < expected {
            return Err(LearnerError::Schema(format!("{} components, need at least {expected}", schema.len())));
        }
        let deterministic = config.deterministic.unwrap_or_else(|| env.instance().is_deterministic());
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            eval_rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
            env,
            schema,
            config,
            deterministic,
            refreshed: None,
            scale: VecDeque::new(),
            frozen: None,
            rollout_cache: None,
            update_log: None,
        })
    }

    pub fn with_frozen(mut self, frozen: Arc<dyn FrozenControl>) -> Self {
        self.frozen = Some(frozen);
        self
    }

    /// Swaps in a modified environment, keeping random state, cost scale and
    /// configuration. Stored values are treated as stale until rewritten.
    pub fn replace_env(&mut self, env: Env, schema: FeatureSchema) -> Result<(), LearnerError> {
        let expected = 3 * env.instance().num_resources() + 2;
        if schema.len() < expected {
            return Err(LearnerError::Schema(format!("{} components, need at least {expected}", schema.len())));
        }
        self.deterministic = self.config.deterministic.unwrap_or_else(|| env.instance().is_deterministic());
        self.env = env;
        self.schema = schema;
        self.rollout_cache = None;
        self.refreshed = Some(HashSet::new());
        Ok(())
    }

    /// Records the step index of every update (for inspecting update order).
    pub fn record_updates(&mut self) {
        self.update_log = Some(Vec::new());
    }

    pub fn update_log(&self) -> Option<&[usize]> {
        self.update_log.as_deref()
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Policy used for training episode `i`.
    pub fn policy_for(&self, episode: usize) -> Policy {
        if episode < self.config.warmup {
            Policy::Rollout { samples: self.config.rollout_samples }
        } else {
            Policy::Softmin { tau: self.config.temperature.at(episode) }
        }
    }

    fn cost_scale(&self) -> f64 {
        if self.scale.is_empty() {
            return 1.0;
        }
        let mut v: Vec<f64> = self.scale.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    fn learner_actions(&self, state: &EnvState, actions: &[ControlAction]) -> Vec<ControlAction> {
        match &self.frozen {
            Some(f) => actions.iter().copied().filter(|a| !f.owns(state, *a)).collect(),
            None => actions.to_vec(),
        }
    }

    /// Q values used for greedy choice: unseen pairs count as +∞ in
    /// deterministic mode.
    fn greedy_values<S: QValueStore + ?Sized>(&self, store: &S, fvs: &[FeatureVector]) -> Vec<f64> {
        fvs.iter()
            .map(|f| if self.deterministic { store.lookup(f).unwrap_or(f64::INFINITY) } else { store.read(f) })
            .collect()
    }

    /// Index of the chosen action, plus the rollout estimates when the
    /// rollout policy computed them.
    fn choose<S: QValueStore + ?Sized, R: Rng>(
        &self,
        policy: Policy,
        state: &EnvState,
        actions: &[ControlAction],
        fvs: &[FeatureVector],
        store: &S,
        rng: &mut R,
    ) -> (usize, Option<Vec<f64>>) {
        if actions.len() == 1 {
            return (0, None);
        }
        let index_of = |a: ControlAction| actions.iter().position(|&b| b == a).unwrap();
        let i = match policy {
            Policy::Rollout { samples } => {
                let est = rollout_estimates(&self.env, state, actions, samples, self.frozen.as_deref(), rng);
                return (argmin(&est), Some(est));
            }
            Policy::Base => index_of(base_policy_action(&self.env, state, actions, rng)),
            Policy::Greedy => {
                let q = self.greedy_values(store, fvs);
                let best = argmin(&q);
                if q[best].is_finite() {
                    best
                } else {
                    index_of(base_policy_action(&self.env, state, actions, rng))
                }
            }
            Policy::Softmin { tau } => {
                let scale = self.cost_scale();
                let q: Vec<f64> = if let (true, Some(margin)) = (self.deterministic, self.config.unseen_margin) {
                    let seen: Vec<Option<f64>> = fvs.iter().map(|f| store.lookup(f)).collect();
                    let best = seen.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                    if !best.is_finite() {
                        return (index_of(base_policy_action(&self.env, state, actions, rng)), None);
                    }
                    seen.into_iter().map(|v| v.unwrap_or(best + margin * scale) / scale).collect()
                } else {
                    fvs.iter().map(|f| store.read(f) / scale).collect()
                };
                let p = softmin_probabilities(&q, tau);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = p.len() - 1;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };
        (i, None)
    }

    fn run_with<S: QValueStore + ?Sized, R: Rng>(
        &self,
        store: &S,
        policy: Policy,
        rng: &mut R,
    ) -> Result<EpisodeTrace, LearnerError> {
        let env = &self.env;
        let initial = env.initial_state(rng);
        let mut x = initial.clone();
        let mut steps: Vec<TraceStep> = Vec::new();
        let mut total = 0.0;
        let mut completions = Vec::new();
        let cap = 10 * env.decision_bound();
        let mut decisions = 0usize;
        let status = loop {
            let status = env.status(&x);
            if status != Status::Running {
                break status;
            }
            decisions += 1;
            if decisions > cap {
                return Err(LearnerError::EpisodeTooLong(cap));
            }
            let actions = env.actions(&x);
            let frozen_pick = self.frozen.as_ref().and_then(|f| f.decide(env, &x, &actions, false));
            let learner = if frozen_pick.is_some() { Vec::new() } else { self.learner_actions(&x, &actions) };
            if learner.is_empty() {
                // not a learner decision: frozen policies or a forced wait
                let a = frozen_pick
                    .or_else(|| actions.contains(&ControlAction::Wait).then_some(ControlAction::Wait))
                    .or_else(|| self.frozen.as_ref().and_then(|f| f.decide(env, &x, &actions, true)))
                    .unwrap_or(actions[0]);
                let out = env.decide(&x, a, rng);
                if let Some(last) = steps.last_mut() {
                    last.cost += out.cost;
                }
                total += out.cost;
                completions.extend(out.finished);
                x = out.next;
                continue;
            }
            let base = self.schema.extract_state(&x);
            let fvs: Vec<FeatureVector> = learner.iter().map(|&a| self.schema.with_action(&base, &x, a)).collect();
            if let Some(last) = steps.last_mut() {
                last.next = Some(fvs.clone());
            }
            let (i, estimates) = self.choose(policy, &x, &learner, &fvs, store, rng);
            let out = env.decide(&x, learner[i], rng);
            total += out.cost;
            completions.extend(out.finished);
            let mut fvs = fvs;
            let features = fvs.swap_remove(i);
            let alternatives = match estimates {
                Some(mut est) => {
                    est.swap_remove(i);
                    fvs.into_iter().zip(est).collect()
                }
                None => Vec::new(),
            };
            steps.push(TraceStep { state: x, action: learner[i], features, cost: out.cost, next: None, alternatives });
            x = out.next;
        };
        Ok(EpisodeTrace { initial, steps, status, total_cost: total, completions, final_state: x })
    }

    /// Simulates one episode from a sampled initial state.
    pub fn run_episode<S: QValueStore + ?Sized>(&mut self, store: &S, policy: Policy) -> Result<EpisodeTrace, LearnerError> {
        let cacheable = matches!(policy, Policy::Rollout { .. }) && self.env.instance().is_deterministic();
        if cacheable {
            if let Some(t) = &self.rollout_cache {
                return Ok(t.clone());
            }
        }
        let mut rng = self.rng.clone();
        let trace = self.run_with(store, policy, &mut rng);
        self.rng = rng;
        let trace = trace?;
        if cacheable {
            self.rollout_cache = Some(trace.clone());
        }
        Ok(trace)
    }

    /// Applies the trace's updates last-to-first; returns the update count.
    pub fn backward_update<S: QValueStore + ?Sized>(&mut self, trace: &EpisodeTrace, store: &mut S) -> usize {
        let mut n = 0;
        // value computed for the successor step; bounds the deterministic
        // minimum even if its write was lost to a collision
        let mut later = f64::INFINITY;
        for (k, step) in trace.steps.iter().enumerate().rev() {
            let next_min = step.next.as_ref().map(|fvs| {
                if self.deterministic {
                    fvs.iter().filter_map(|f| store.lookup(f)).fold(later, f64::min)
                } else {
                    fvs.iter().map(|f| store.read(f)).fold(f64::INFINITY, f64::min)
                }
            });
            let target = q_target(step.cost, self.config.discount, next_min);
            let new = if self.deterministic {
                let keep_min = self.refresh(&step.features);
                q_update(store.lookup(&step.features), target, 1.0, keep_min)
            } else {
                let gamma = self.config.learning_rate.at(store.visits(&step.features));
                q_update(Some(store.read(&step.features)), target, gamma, false)
            };
            store.write(&step.features, new, step.state.now);
            later = new;
            for (f, est) in &step.alternatives {
                let v = if self.deterministic {
                    let keep_min = self.refresh(f);
                    q_update(store.lookup(f), *est, 1.0, keep_min)
                } else {
                    let gamma = self.config.learning_rate.at(store.visits(f));
                    q_update(Some(store.read(f)), *est, gamma, false)
                };
                store.write(f, v, step.state.now);
            }
            if let Some(log) = &mut self.update_log {
                log.push(k);
            }
            n += 1;
        }
        n
    }

    /// Whether a deterministic update of `f` may keep the stored minimum.
    fn refresh(&mut self, f: &FeatureVector) -> bool {
        match &mut self.refreshed {
            None => true,
            Some(seen) => !seen.insert(f.values.iter().map(|v| v.to_bits()).collect()),
        }
    }

    fn observe_cost(&mut self, cost: f64) {
        self.scale.push_back(cost.abs());
        while self.scale.len() > self.config.scale_window.max(1) {
            self.scale.pop_front();
        }
    }

    /// Runs and learns from training episode number `episode`.
    pub fn training_episode<S: QValueStore + ?Sized>(
        &mut self,
        store: &mut S,
        episode: usize,
    ) -> Result<(EpisodeRecord, usize), LearnerError> {
        let policy = self.policy_for(episode);
        let trace = self.run_episode(&*store, policy)?;
        let updates = self.backward_update(&trace, store);
        store.end_episode(episode);
        self.observe_cost(trace.total_cost);
        let tau = match policy {
            Policy::Softmin { tau } => Some(tau),
            _ => None,
        };
        let rec = EpisodeRecord {
            episode,
            cost: trace.total_cost,
            tau,
            wall_secs: 0.0,
            success: trace.status == Status::Success,
        };
        Ok((rec, updates))
    }

    /// Greedy action at `state` among the learner's actions.
    pub fn greedy_action<S: QValueStore + ?Sized>(&self, store: &S, state: &EnvState) -> Option<ControlAction> {
        let actions = self.learner_actions(state, &self.env.actions(state));
        if actions.is_empty() {
            return None;
        }
        let base = self.schema.extract_state(state);
        let fvs: Vec<FeatureVector> = actions.iter().map(|&a| self.schema.with_action(&base, state, a)).collect();
        let mut rng = self.eval_rng.clone();
        Some(actions[self.choose(Policy::Greedy, state, &actions, &fvs, store, &mut rng).0])
    }

    /// Mean cost of the greedy policy over `runs` episodes (one on
    /// deterministic instances).
    pub fn evaluate_greedy<S: QValueStore + ?Sized>(&mut self, store: &S, runs: usize) -> f64 {
        let runs = if self.env.instance().is_deterministic() { 1 } else { runs.max(1) };
        let mut rng = self.eval_rng.clone();
        let mut total = 0.0;
        for _ in 0..runs {
            total += self.run_with(store, Policy::Greedy, &mut rng).map_or(f64::INFINITY, |t| t.total_cost);
        }
        self.eval_rng = rng;
        total / runs as f64
    }

    /// Greedy-policy episode (for replay and inspection).
    pub fn greedy_episode<S: QValueStore + ?Sized>(&mut self, store: &S) -> Result<EpisodeTrace, LearnerError> {
        let mut rng = self.eval_rng.clone();
        let t = self.run_with(store, Policy::Greedy, &mut rng);
        self.eval_rng = rng;
        t
    }

    /// The full training loop over `config.episodes` episodes.
    pub fn train<S: QValueStore + ?Sized>(&mut self, store: &mut S, options: &TrainOptions) -> Result<TrainReport, LearnerError> {
        let start = Instant::now();
        let mut curve = Vec::with_capacity(self.config.episodes);
        let mut checkpoints = Vec::new();
        let mut updates = 0;
        let mut stopped_at = None;
        let eval_runs = options.eval_runs.max(1);
        for i in 0..self.config.episodes {
            let (mut rec, n) = self.training_episode(store, i)?;
            rec.wall_secs = start.elapsed().as_secs_f64();
            curve.push(rec);
            updates += n;
            let done = i + 1;
            if options.checkpoints.contains(&done) {
                let greedy_cost = self.evaluate_greedy(&*store, eval_runs);
                checkpoints.push(Checkpoint { episode: done, greedy_cost, wall_secs: start.elapsed().as_secs_f64() });
            }
            if let Some(rule) = options.stop {
                if done % rule.every.max(1) == 0 && rule.reached(self.evaluate_greedy(&*store, eval_runs)) {
                    stopped_at = Some(done);
                    break;
                }
            }
        }
        Ok(TrainReport { curve, checkpoints, stopped_at, elapsed: start.elapsed(), updates })
    }
}
