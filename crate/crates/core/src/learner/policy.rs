use rand::rngs::mock::StepRng;
use rand::Rng;

use crate::env::{ControlAction, Env, EnvState, Status};

/// Decisions taken over by fixed policies (earlier clusters).
pub trait FrozenControl: Send + Sync {
    /// Claims the decision at `state` if one of the frozen policies wants to
    /// act. With `force`, some action must be returned (the free learner has
    /// nothing it may choose).
    fn decide(&self, env: &Env, state: &EnvState, actions: &[ControlAction], force: bool) -> Option<ControlAction>;

    /// Whether `action` belongs to a frozen policy rather than the learner.
    fn owns(&self, state: &EnvState, action: ControlAction) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Softmin { tau: f64 },
    Greedy,
    Rollout { samples: usize },
    Base,
}

/// Stochastic-duration or -effect operations running in `state`.
fn stochastic_running(env: &Env, state: &EnvState) -> usize {
    state
        .resources
        .iter()
        .filter(|rs| {
            rs.running
                .and_then(|op| env.instance().capability(rs.state, op))
                .is_some_and(|c| !c.duration.is_point_mass() || !c.effect.is_point_mass())
        })
        .count()
}

const EXACT_LIMIT: usize = 4;
const MC_SAMPLES: usize = 16;

/// Expected decision-level cost of `action`: exact for deterministic
/// instances and small stochastic states, Monte Carlo otherwise.
pub(crate) fn decision_cost<R: Rng + ?Sized>(env: &Env, state: &EnvState, action: ControlAction, rng: &mut R) -> f64 {
    if env.instance().is_deterministic() {
        return env.decide(state, action, &mut StepRng::new(0, 0)).cost;
    }
    // the action itself may start a stochastic operation
    if stochastic_running(env, state) < EXACT_LIMIT {
        return env.expected_decision_cost(state, action);
    }
    (0..MC_SAMPLES).map(|_| env.decide(state, action, rng).cost).sum::<f64>() / MC_SAMPLES as f64
}

/// Greedy in expected immediate (decision-level) cost; ties go to the first
/// action in order, i.e. the smallest (operation, resource).
pub fn base_policy_action<R: Rng + ?Sized>(
    env: &Env,
    state: &EnvState,
    actions: &[ControlAction],
    rng: &mut R,
) -> ControlAction {
    assert!(!actions.is_empty(), "base policy at a state without actions");
    if actions.len() == 1 {
        return actions[0];
    }
    let regular = env.measure().regular;
    let mut best = (actions[0], f64::INFINITY);
    for &a in actions {
        let c = decision_cost(env, state, a, rng);
        if regular && c <= 0.0 {
            return a;
        }
        if c < best.1 {
            best = (a, c);
        }
    }
    best.0
}

/// Cost of finishing the episode from `state` with the base policy (frozen
/// policies keep their decisions).
pub(crate) fn base_completion<R: Rng + ?Sized>(
    env: &Env,
    state: &EnvState,
    frozen: Option<&dyn FrozenControl>,
    rng: &mut R,
) -> f64 {
    let mut x = state.clone();
    let mut total = 0.0;
    let cap = 10 * env.decision_bound();
    for _ in 0..cap {
        if env.status(&x) != Status::Running {
            return total;
        }
        let actions = env.actions(&x);
        let a = frozen
            .and_then(|f| f.decide(env, &x, &actions, false))
            .unwrap_or_else(|| base_policy_action(env, &x, &actions, rng));
        let out = env.decide(&x, a, rng);
        total += out.cost;
        x = out.next;
    }
    panic!("base policy episode exceeded {cap} decisions");
}

/// Rollout estimate of each action: its decision cost plus the base policy's
/// completion cost, averaged over `samples` simulations (one on
/// deterministic instances).
pub fn rollout_estimates<R: Rng + ?Sized>(
    env: &Env,
    state: &EnvState,
    actions: &[ControlAction],
    samples: usize,
    frozen: Option<&dyn FrozenControl>,
    rng: &mut R,
) -> Vec<f64> {
    let m = if env.instance().is_deterministic() { 1 } else { samples.max(1) };
    actions
        .iter()
        .map(|&a| {
            let mut total = 0.0;
            for _ in 0..m {
                let out = env.decide(state, a, rng);
                total += out.cost + base_completion(env, &out.next, frozen, rng);
            }
            total / m as f64
        })
        .collect()
}

/// One-step lookahead over the base policy; ties go to the first action.
pub fn rollout_action<R: Rng + ?Sized>(
    env: &Env,
    state: &EnvState,
    actions: &[ControlAction],
    samples: usize,
    frozen: Option<&dyn FrozenControl>,
    rng: &mut R,
) -> ControlAction {
    assert!(!actions.is_empty(), "rollout at a state without actions");
    if actions.len() == 1 {
        return actions[0];
    }
    actions[argmin(&rollout_estimates(env, state, actions, samples, frozen, rng))]
}

/// Index of the first minimum.
pub(crate) fn argmin(values: &[f64]) -> usize {
    values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc }).0
}
