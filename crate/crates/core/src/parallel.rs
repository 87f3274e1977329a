//! Multi-worker sampling: one shared value table, or independent workers
//! with best-policy selection.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use thiserror::Error;

use crate::env::Env;
use crate::features::FeatureSchema;
use crate::learner::{Learner, LearnerConfig, LearnerError, StopRule};
use crate::store::{QValueStore, SharedHashQTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelMode {
    Shared,
    Distributed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelConfig {
    pub mode: ParallelMode,
    /// One seed per worker.
    pub seeds: Vec<u64>,
    /// Global budget in shared mode, per-worker budget in distributed mode.
    pub episodes: usize,
    /// Selection rollouts per worker; `None` uses 30 (1 on deterministic
    /// instances).
    pub eval_runs: Option<usize>,
}

impl ParallelConfig {
    /// Workers seeded `base, base + 1, …`.
    pub fn new(mode: ParallelMode, workers: usize, base_seed: u64, episodes: usize) -> Self {
        Self { mode, seeds: (0..workers as u64).map(|i| base_seed.wrapping_add(i)).collect(), episodes, eval_runs: None }
    }

    pub fn workers(&self) -> usize {
        self.seeds.len()
    }

    fn check(&self) -> Result<(), ParallelError> {
        if self.seeds.is_empty() {
            return Err(ParallelError::NoWorkers);
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(ParallelError::DuplicateSeeds);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParallelError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("worker seeds must be distinct")]
    DuplicateSeeds,
    #[error("every worker failed every evaluation episode")]
    AllFailed,
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone)]
pub struct SharedRun {
    /// Episodes completed across all workers.
    pub episodes: usize,
    pub per_worker: Vec<usize>,
    pub elapsed: Duration,
    /// Wall clock and global episode count when the stop rule fired.
    pub reached: Option<(Duration, usize)>,
    pub greedy_cost: f64,
    /// Per-episode costs by global episode index (k = 1 matches the
    /// sequential learning curve).
    pub curve: Vec<f64>,
}

/// `k` workers sample episodes against one shared table until the global
/// budget is spent or the stop rule fires. Whichever worker claims an episode
/// index divisible by `stop.every` evaluates the greedy policy after it.
pub fn run_shared(
    config: &ParallelConfig,
    env: &Env,
    schema: &FeatureSchema,
    learner: &LearnerConfig,
    store: &SharedHashQTable,
    stop: Option<StopRule>,
) -> Result<SharedRun, ParallelError> {
    config.check()?;
    let next = AtomicUsize::new(0);
    let done = AtomicBool::new(false);
    let reached: Mutex<Option<(Duration, usize)>> = Mutex::new(None);
    let curve = Mutex::new(vec![f64::NAN; config.episodes]);
    let start = Instant::now();
    let per_worker = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let (next, done, reached, curve) = (&next, &done, &reached, &curve);
                scope.spawn(move || -> Result<usize, ParallelError> {
                    let cfg = LearnerConfig { seed, ..learner.clone() };
                    let mut agent = Learner::new(env.clone(), schema.clone(), cfg)?;
                    let mut shared = store;
                    let mut count = 0;
                    while !done.load(Ordering::Acquire) {
                        let i = next.fetch_add(1, Ordering::AcqRel);
                        if i >= config.episodes {
                            break;
                        }
                        let (rec, _) = agent.training_episode(&mut shared, i)?;
                        curve.lock()[i] = rec.cost;
                        count += 1;
                        if let Some(rule) = stop {
                            if (i + 1) % rule.every.max(1) == 0 && rule.reached(agent.evaluate_greedy(&shared, 30)) {
                                let mut r = reached.lock();
                                if r.is_none() {
                                    *r = Some((start.elapsed(), i + 1));
                                }
                                done.store(true, Ordering::Release);
                            }
                        }
                    }
                    Ok(count)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    let elapsed = start.elapsed();
    let mut evaluator = Learner::new(env.clone(), schema.clone(), LearnerConfig { seed: config.seeds[0], ..learner.clone() })?;
    let greedy_cost = evaluator.evaluate_greedy(&store, 30);
    let episodes: usize = per_worker.iter().sum();
    let mut curve = curve.into_inner();
    curve.truncate(episodes.min(config.episodes));
    Ok(SharedRun { episodes, per_worker, elapsed, reached: reached.into_inner(), greedy_cost, curve })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSummary {
    pub seed: u64,
    pub episodes: usize,
    pub train_secs: f64,
    /// Mean cost of the worker's greedy policy over the selection rollouts.
    pub evaluated_cost: f64,
}

pub struct DistributedRun<S> {
    pub selected: usize,
    pub workers: Vec<WorkerSummary>,
    /// Store of the selected worker.
    pub store: S,
    pub elapsed: Duration,
}

impl<S> DistributedRun<S> {
    pub fn selected_cost(&self) -> f64 {
        self.workers[self.selected].evaluated_cost
    }
}

/// Independent workers with private stores; returns the worker whose greedy
/// policy has the smallest evaluated mean cost (lowest index on ties).
pub fn run_distributed<S, F>(
    config: &ParallelConfig,
    env: &Env,
    schema: &FeatureSchema,
    learner: &LearnerConfig,
    make_store: F,
) -> Result<DistributedRun<S>, ParallelError>
where
    S: QValueStore + Send,
    F: Fn(&FeatureSchema) -> S + Sync,
{
    config.check()?;
    let runs = config.eval_runs.unwrap_or(if env.instance().is_deterministic() { 1 } else { 30 });
    let start = Instant::now();
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let make_store = &make_store;
                scope.spawn(move || -> Result<(WorkerSummary, S), ParallelError> {
                    let t0 = Instant::now();
                    let cfg = LearnerConfig { seed, episodes: config.episodes, ..learner.clone() };
                    let mut agent = Learner::new(env.clone(), schema.clone(), cfg)?;
                    let mut store = make_store(schema);
                    let report = agent.train(&mut store, &Default::default())?;
                    let train_secs = t0.elapsed().as_secs_f64();
                    let evaluated_cost = agent.evaluate_greedy(&store, runs);
                    Ok((WorkerSummary { seed, episodes: report.curve.len(), train_secs, evaluated_cost }, store))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    let (workers, stores): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let selected = workers
        .iter()
        .enumerate()
        .filter(|(_, w)| w.evaluated_cost.is_finite())
        .fold(None, |best: Option<(usize, f64)>, (i, w)| match best {
            Some((_, c)) if c <= w.evaluated_cost => best,
            _ => Some((i, w.evaluated_cost)),
        })
        .ok_or(ParallelError::AllFailed)?
        .0;
    let store = stores.into_iter().nth(selected).unwrap();
    Ok(DistributedRun { selected, workers, store, elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::env::EnvConfig;
    use crate::features::FeatureMode;
    use crate::learner::TrainOptions;
    use crate::rap::{encode_jsp, JobShop, PerformanceMeasure};
    use crate::store::HashQTable;

    fn setup() -> (Env, FeatureSchema) {
        let shop = JobShop::classical(2, vec![vec![(0, 3), (1, 2)], vec![(1, 2), (0, 4)], vec![(0, 2), (1, 1)]]);
        let inst = Arc::new(encode_jsp(&shop).unwrap().instance);
        let env = Env::new(inst.clone(), PerformanceMeasure::makespan(), EnvConfig::default()).unwrap();
        (env, FeatureSchema::new(inst, FeatureMode::Packed))
    }

    #[test]
    fn one_shared_worker_matches_sequential() {
        let (env, schema) = setup();
        let cfg = LearnerConfig { episodes: 200, warmup: 5, seed: 7, ..LearnerConfig::default() };
        let mut seq = Learner::new(env.clone(), schema.clone(), cfg.clone()).unwrap();
        let mut table = HashQTable::with_default_budget(schema.radices().to_vec());
        let report = seq.train(&mut table, &TrainOptions::default()).unwrap();
        let shared = SharedHashQTable::with_default_budget(schema.radices().to_vec());
        let run = run_shared(&ParallelConfig::new(ParallelMode::Shared, 1, 7, 200), &env, &schema, &cfg, &shared, None).unwrap();
        let seq_curve: Vec<f64> = report.curve.iter().map(|r| r.cost).collect();
        assert_eq!(run.curve, seq_curve);
        assert_eq!(run.episodes, 200);
    }

    #[test]
    fn shared_budget_accounting() {
        let (env, schema) = setup();
        let cfg = LearnerConfig { warmup: 2, ..LearnerConfig::default() };
        let shared = SharedHashQTable::with_default_budget(schema.radices().to_vec());
        let run = run_shared(&ParallelConfig::new(ParallelMode::Shared, 3, 1, 150), &env, &schema, &cfg, &shared, None).unwrap();
        assert_eq!(run.episodes, 150);
        assert_eq!(run.per_worker.len(), 3);
    }

    #[test]
    fn distributed_selects_minimum_and_is_reproducible() {
        let (env, schema) = setup();
        let cfg = LearnerConfig { warmup: 2, ..LearnerConfig::default() };
        let pc = ParallelConfig::new(ParallelMode::Distributed, 3, 11, 100);
        let make = |s: &FeatureSchema| HashQTable::with_default_budget(s.radices().to_vec());
        let a = run_distributed(&pc, &env, &schema, &cfg, make).unwrap();
        let b = run_distributed(&pc, &env, &schema, &cfg, make).unwrap();
        assert_eq!(a.selected, b.selected);
        let costs: Vec<f64> = a.workers.iter().map(|w| w.evaluated_cost).collect();
        assert_eq!(costs, b.workers.iter().map(|w| w.evaluated_cost).collect::<Vec<_>>());
        let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(a.selected_cost(), min);
        assert_eq!(a.selected, costs.iter().position(|&c| c == min).unwrap());
        let dup = ParallelConfig { seeds: vec![1, 1], ..pc };
        assert_eq!(run_distributed(&dup, &env, &schema, &cfg, make).err(), Some(ParallelError::DuplicateSeeds));
    }
}
