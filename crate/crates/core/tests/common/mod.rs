//! Instance builders and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rapql::env::{ControlAction, Env, EnvConfig, EnvState, Status};
use rapql::rap::{
    encode_jsp, DurationDist, JobShop, OpId, PerformanceMeasure, RapInstance, ResourceId, Schedule, ScheduleEntry,
    StateDist, StateId,
};
use rapql::svr::{kernel, SvrParams, TrainingSample};

/// Random flexible job shop with `1..=max_ops` operations per job.
pub fn random_shop<R: Rng>(rng: &mut R, jobs: usize, machines: usize, max_ops: usize, max_alts: usize) -> JobShop {
    let jobs = (0..jobs)
        .map(|_| {
            (0..rng.gen_range(1..=max_ops))
                .map(|_| {
                    let k = rng.gen_range(1..=max_alts.min(machines));
                    let mut ms: Vec<usize> = (0..machines).collect();
                    for i in 0..k {
                        let j = rng.gen_range(i..machines);
                        ms.swap(i, j);
                    }
                    ms[..k].iter().map(|&m| (m, rng.gen_range(1..=6))).collect()
                })
                .collect()
        })
        .collect();
    JobShop { num_machines: machines, jobs }
}

pub fn shop_instance(shop: &JobShop) -> Arc<RapInstance> {
    Arc::new(encode_jsp(shop).expect("valid shop").instance)
}

pub fn makespan_env(instance: Arc<RapInstance>, decompose: bool) -> Env {
    Env::new(instance, PerformanceMeasure::makespan(), EnvConfig { decompose, ..EnvConfig::default() }).unwrap()
}

/// Random instance with stochastic durations: chains over two machines where
/// every operation may take one of two durations.
pub fn random_stochastic<R: Rng>(rng: &mut R, tasks: usize) -> Arc<RapInstance> {
    let mut b = RapInstance::builder(2, 2, tasks);
    for t in 0..tasks as u32 {
        b.mark_task(OpId(t));
        for s in 0..2u32 {
            if s == 0 || rng.gen_bool(0.5) {
                let lo = rng.gen_range(1..=3);
                let dist = if rng.gen_bool(0.6) {
                    DurationDist::new(vec![(lo, 0.5), (lo + rng.gen_range(1..=3), 0.5)]).unwrap()
                } else {
                    DurationDist::point(lo).unwrap()
                };
                b.capability(StateId(s), OpId(t), dist, StateDist::point(StateId(s)));
            }
        }
        if t > 0 && rng.gen_bool(0.5) {
            b.precede(OpId(rng.gen_range(0..t)), OpId(t));
        }
    }
    b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
    b.set_initial(ResourceId(1), StateDist::point(StateId(1)));
    Arc::new(b.build())
}

/// The enumerable corpus: at most three tasks, two resources and two-point
/// duration supports.
pub fn enumerable_corpus() -> Vec<(&'static str, Arc<RapInstance>)> {
    let two = |a: u32, b: u32, p: f64| DurationDist::new(vec![(a, p), (b, 1.0 - p)]).unwrap();
    let mut out = Vec::new();

    // single task, two alternative machines with different risk
    let mut b = RapInstance::builder(2, 2, 1);
    b.mark_task(OpId(0));
    b.capability(StateId(0), OpId(0), two(1, 5, 0.5), StateDist::point(StateId(0)));
    b.capability(StateId(1), OpId(0), DurationDist::point(3).unwrap(), StateDist::point(StateId(1)));
    b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
    b.set_initial(ResourceId(1), StateDist::point(StateId(1)));
    out.push(("risk-choice", Arc::new(b.build())));

    // deterministic two-job shop
    out.push(("jsp-2x2", shop_instance(&JobShop::classical(2, vec![vec![(0, 3), (1, 2)], vec![(1, 2), (0, 4)]]))));

    // flexible three tasks with stochastic durations and a precedence
    let mut b = RapInstance::builder(2, 2, 3);
    for t in 0..3 {
        b.mark_task(OpId(t));
    }
    b.capability(StateId(0), OpId(0), two(1, 3, 0.5), StateDist::point(StateId(0)));
    b.capability(StateId(1), OpId(0), DurationDist::point(2).unwrap(), StateDist::point(StateId(1)));
    b.capability(StateId(0), OpId(1), DurationDist::point(2).unwrap(), StateDist::point(StateId(0)));
    b.capability(StateId(1), OpId(1), two(1, 4, 0.3), StateDist::point(StateId(1)));
    b.capability(StateId(1), OpId(2), two(2, 3, 0.5), StateDist::point(StateId(1)));
    b.precede(OpId(0), OpId(2));
    b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
    b.set_initial(ResourceId(1), StateDist::point(StateId(1)));
    out.push(("flex-3", Arc::new(b.build())));

    // stochastic effect: the machine may need a changeover after task 0
    let mut b = RapInstance::builder(1, 2, 3);
    b.mark_task(OpId(0));
    b.mark_task(OpId(1));
    b.capability(StateId(0), OpId(0), two(1, 2, 0.5), StateDist::new(vec![(StateId(0), 0.6), (StateId(1), 0.4)]).unwrap());
    b.capability(StateId(0), OpId(1), DurationDist::point(2).unwrap(), StateDist::point(StateId(0)));
    b.capability(StateId(1), OpId(2), DurationDist::point(1).unwrap(), StateDist::point(StateId(0)));
    b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
    out.push(("changeover", Arc::new(b.build())));

    // random initial state over two machines
    let mut b = RapInstance::builder(2, 2, 2);
    b.mark_task(OpId(0));
    b.mark_task(OpId(1));
    b.capability(StateId(0), OpId(0), DurationDist::point(1).unwrap(), StateDist::point(StateId(0)));
    b.capability(StateId(1), OpId(0), DurationDist::point(3).unwrap(), StateDist::point(StateId(1)));
    b.capability(StateId(0), OpId(1), two(2, 4, 0.5), StateDist::point(StateId(0)));
    b.capability(StateId(1), OpId(1), DurationDist::point(2).unwrap(), StateDist::point(StateId(1)));
    b.set_initial(ResourceId(0), StateDist::new(vec![(StateId(0), 0.5), (StateId(1), 0.5)]).unwrap());
    b.set_initial(ResourceId(1), StateDist::point(StateId(1)));
    out.push(("random-start", Arc::new(b.build())));
    out
}

/// Exact optimal cost-to-go by memoized recursion over decision transitions.
pub struct ValueOracle<'a> {
    env: &'a Env,
    memo: HashMap<EnvState, f64>,
}

impl<'a> ValueOracle<'a> {
    pub fn new(env: &'a Env) -> Self {
        Self { env, memo: HashMap::new() }
    }

    pub fn value(&mut self, x: &EnvState) -> f64 {
        if self.env.status(x) != Status::Running {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(x) {
            return v;
        }
        let v = self
            .env
            .actions(x)
            .into_iter()
            .map(|a| self.q(x, a))
            .fold(f64::INFINITY, f64::min);
        self.memo.insert(x.clone(), v);
        v
    }

    pub fn q(&mut self, x: &EnvState, a: ControlAction) -> f64 {
        self.env.decide_distribution(x, a).into_iter().map(|b| b.prob * (b.cost + self.value(&b.next))).sum()
    }

    pub fn initial(&mut self) -> f64 {
        self.env.initial_distribution().into_iter().map(|(p, x)| p * self.value(&x)).sum()
    }
}

/// Every decision state reachable from the initial distribution.
pub fn reachable_states(env: &Env) -> Vec<EnvState> {
    let mut seen = HashSet::new();
    let mut stack: Vec<EnvState> = env.initial_distribution().into_iter().map(|(_, x)| x).collect();
    let mut out = Vec::new();
    while let Some(x) = stack.pop() {
        if env.status(&x) != Status::Running || !seen.insert(x.clone()) {
            continue;
        }
        for a in env.actions(&x) {
            stack.extend(env.decide_distribution(&x, a).into_iter().map(|b| b.next));
        }
        out.push(x);
    }
    out
}

/// Exact expected cost of a deterministic stationary policy.
pub fn policy_value(env: &Env, policy: &dyn Fn(&EnvState) -> ControlAction) -> f64 {
    fn go(env: &Env, x: &EnvState, policy: &dyn Fn(&EnvState) -> ControlAction, memo: &mut HashMap<EnvState, f64>) -> f64 {
        if env.status(x) != Status::Running {
            return 0.0;
        }
        if let Some(&v) = memo.get(x) {
            return v;
        }
        let v = env
            .decide_distribution(x, policy(x))
            .into_iter()
            .map(|b| b.prob * (b.cost + go(env, &b.next, policy, memo)))
            .sum();
        memo.insert(x.clone(), v);
        v
    }
    let mut memo = HashMap::new();
    env.initial_distribution().into_iter().map(|(p, x)| p * go(env, &x, policy, &mut memo)).sum()
}

/// Minimum expected cost over every deterministic stationary policy, by
/// exhaustive enumeration. Actions are only fixed for states the partial
/// policy can reach. `None` when more than `cap` complete policies exist.
pub fn best_policy_by_enumeration(env: &Env, cap: u64) -> Option<f64> {
    fn first_open(env: &Env, fixed: &HashMap<EnvState, ControlAction>) -> Option<EnvState> {
        let mut seen = HashSet::new();
        let mut stack: Vec<EnvState> = env.initial_distribution().into_iter().map(|(_, x)| x).collect();
        while let Some(x) = stack.pop() {
            if env.status(&x) != Status::Running || !seen.insert(x.clone()) {
                continue;
            }
            match fixed.get(&x) {
                Some(&a) => stack.extend(env.decide_distribution(&x, a).into_iter().map(|b| b.next)),
                None => return Some(x),
            }
        }
        None
    }
    fn go(env: &Env, fixed: &mut HashMap<EnvState, ControlAction>, count: &mut u64, cap: u64) -> Option<f64> {
        let Some(x) = first_open(env, fixed) else {
            *count += 1;
            return (*count <= cap).then(|| policy_value(env, &|y: &EnvState| fixed[y]));
        };
        let mut best = f64::INFINITY;
        for a in env.actions(&x) {
            fixed.insert(x.clone(), a);
            best = best.min(go(env, fixed, count, cap)?);
        }
        fixed.remove(&x);
        Some(best)
    }
    go(env, &mut HashMap::new(), &mut 0, cap)
}

/// Runs one episode of uniformly random decisions; returns the visited
/// decision states, the per-decision costs and the final state.
pub fn random_episode<R: Rng>(env: &Env, rng: &mut R) -> (Vec<EnvState>, Vec<f64>, Vec<rapql::env::Completion>, EnvState) {
    let x0 = env.initial_state(rng);
    let mut x = x0.clone();
    let mut states = vec![x.clone()];
    let mut costs = Vec::new();
    let mut done = Vec::new();
    while env.status(&x) == Status::Running {
        let acts = env.actions(&x);
        let a = acts[rng.gen_range(0..acts.len())];
        let out = env.decide(&x, a, rng);
        costs.push(out.cost);
        done.extend(out.finished);
        x = out.next;
        states.push(x.clone());
    }
    (states, costs, done, x)
}

/// Which of the four feasibility properties a complete schedule violates,
/// computed directly from their definitions.
pub fn violated_properties(instance: &RapInstance, schedule: &Schedule, initial: &[StateId]) -> Vec<u8> {
    let entries: Vec<ScheduleEntry> = schedule.entries().copied().collect();
    let mut tags = Vec::new();
    let mut count: BTreeMap<OpId, usize> = BTreeMap::new();
    for e in &entries {
        *count.entry(e.op).or_default() += 1;
    }
    if instance.tasks().iter().any(|t| count.get(t).copied().unwrap_or(0) != 1) {
        tags.push(1);
    }
    let overlap = entries.iter().enumerate().any(|(i, a)| {
        entries[i + 1..]
            .iter()
            .any(|b| a.resource == b.resource && a.start < b.finish() && b.start < a.finish())
    });
    if overlap {
        tags.push(2);
    }
    let precedence = instance.precedence().iter().any(|&(u, v)| {
        let fu = entries.iter().filter(|e| e.op == u).map(ScheduleEntry::finish).max();
        let sv = entries.iter().filter(|e| e.op == v).map(|e| e.start).min();
        matches!((fu, sv), (Some(f), Some(s)) if s < f)
    });
    if precedence {
        tags.push(3);
    }
    let capability = instance.resources().any(|r| {
        let mut state = initial[r.index()];
        let mut own: Vec<&ScheduleEntry> = entries.iter().filter(|e| e.resource == r).collect();
        own.sort_by_key(|e| e.start);
        own.into_iter().any(|e| match instance.capability(state, e.op) {
            Some(c) => {
                state = e.end_state.unwrap_or_else(|| c.effect.support()[0].0);
                false
            }
            None => true,
        })
    });
    if capability {
        tags.push(4);
    }
    tags
}

/// ν-SVR dual solved by enumerating which multipliers are zero; returns the
/// prediction function's coefficients and bias. With `C ν / 2` below the box
/// bound `C / l` no multiplier sits at its upper bound.
pub fn dual_oracle(samples: &[TrainingSample], p: &SvrParams) -> (Vec<f64>, f64) {
    let l = samples.len();
    let upper = p.c / l as f64;
    let half = p.c * p.nu / 2.0;
    assert!(half < upper);
    let k = DMatrix::from_fn(l, l, |i, j| kernel(&samples[i].input, &samples[j].input, p.kernel));
    // z = (α*, α), β = α* − α
    let s = DMatrix::from_fn(l, 2 * l, |i, j| if j == i { 1.0 } else if j == i + l { -1.0 } else { 0.0 });
    let q = s.transpose() * &k * &s;
    let y = DVector::from_iterator(l, samples.iter().map(|s| s.target));
    let lin = s.transpose() * &y;
    let group = |j: usize| usize::from(j >= l);

    let mut best: Option<(f64, DVector<f64>, [f64; 2])> = None;
    for mask in 1u32..(1 << (2 * l)) {
        let free: Vec<usize> = (0..2 * l).filter(|j| mask & (1 << j) != 0).collect();
        if !(0..2).all(|g| free.iter().any(|&j| group(j) == g)) {
            continue;
        }
        let n = free.len();
        let mut m = DMatrix::zeros(n + 2, n + 2);
        let mut rhs = DVector::zeros(n + 2);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                m[(a, b)] = q[(i, j)];
            }
            m[(a, n + group(i))] = 1.0;
            m[(n + group(i), a)] = 1.0;
            rhs[a] = lin[i];
        }
        rhs[n] = half;
        rhs[n + 1] = half;
        let sol = m.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
        if (&m * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let mut z = DVector::zeros(2 * l);
        for (a, &i) in free.iter().enumerate() {
            z[i] = sol[a];
        }
        let lambda = [sol[n], sol[n + 1]];
        if z.iter().any(|&v| v < -1e-10 || v > upper + 1e-10) {
            continue;
        }
        let grad = &q * &z - &lin;
        let stationary = (0..2 * l).filter(|j| mask & (1 << j) == 0).all(|j| grad[j] + lambda[group(j)] >= -1e-9);
        if !stationary {
            continue;
        }
        let obj = 0.5 * z.dot(&(&q * &z)) - lin.dot(&z);
        if best.as_ref().is_none_or(|(o, _, _)| obj < *o - 1e-12) {
            best = Some((obj, z, lambda));
        }
    }
    let (_, z, lambda) = best.expect("the dual has an optimum");
    let beta = (0..l).map(|i| z[i] - z[i + l]).collect();
    (beta, (lambda[0] - lambda[1]) / 2.0)
}
