use std::collections::HashSet;

use crate::env::{Env, EnvState, Status};
use crate::features::FeatureSchema;
use crate::store::QValueStore;

/// Every non-terminal decision state reachable from the initial
/// distribution, ordered by decreasing progress (successors first).
pub fn enumerate_decision_states(env: &Env) -> Vec<EnvState> {
    let mut seen: HashSet<EnvState> = HashSet::new();
    let mut stack: Vec<EnvState> = Vec::new();
    for (_, x) in env.initial_distribution() {
        stack.push(x);
    }
    while let Some(x) = stack.pop() {
        if env.status(&x) != Status::Running || seen.contains(&x) {
            continue;
        }
        for a in env.actions(&x) {
            for b in env.decide_distribution(&x, a) {
                if !seen.contains(&b.next) {
                    stack.push(b.next);
                }
            }
        }
        seen.insert(x);
    }
    let mut states: Vec<EnvState> = seen.into_iter().collect();
    states.sort_by(|a, b| b.progress().cmp(&a.progress()).then_with(|| a.now.cmp(&b.now)));
    states
}

fn min_q<S: QValueStore + ?Sized>(env: &Env, schema: &FeatureSchema, store: &S, state: &EnvState) -> f64 {
    if env.status(state) != Status::Running {
        return 0.0;
    }
    let base = schema.extract_state(state);
    env.actions(state)
        .into_iter()
        .map(|a| store.read(&schema.with_action(&base, state, a)))
        .fold(f64::INFINITY, f64::min)
}

/// Expected Q backups over all decision states with every action explored.
/// With a resolving feature schema one sweep is exact, since states are
/// visited successors first. Returns the number of writes.
pub fn backup_sweeps<S: QValueStore + ?Sized>(
    env: &Env,
    schema: &FeatureSchema,
    store: &mut S,
    discount: f64,
    sweeps: usize,
) -> usize {
    let states = enumerate_decision_states(env);
    let mut writes = 0;
    for _ in 0..sweeps {
        for x in &states {
            let base = schema.extract_state(x);
            for a in env.actions(x) {
                let q: f64 = env
                    .decide_distribution(x, a)
                    .iter()
                    .map(|b| b.prob * (b.cost + discount * min_q(env, schema, &*store, &b.next)))
                    .sum();
                store.write(&schema.with_action(&base, x, a), q, x.now);
                writes += 1;
            }
        }
    }
    writes
}

/// Expected greedy value over the initial distribution.
pub fn initial_value<S: QValueStore + ?Sized>(env: &Env, schema: &FeatureSchema, store: &S) -> f64 {
    env.initial_distribution()
        .iter()
        .map(|(p, x)| p * min_q(env, schema, store, x))
        .sum()
}
