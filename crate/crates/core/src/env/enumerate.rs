//! Exact transition distributions, for expected-cost policies and oracles on
//! small instances.

use std::collections::HashMap;

use crate::rap::{ResourceId, StateId};

use super::{ControlAction, Env, EnvState, Status};

/// One outcome of a transition.
#[derive(Debug, Clone)]
pub struct Branch {
    pub prob: f64,
    pub next: EnvState,
    pub cost: f64,
}

#[derive(Default)]
struct Merger {
    index: HashMap<(EnvState, u64), usize>,
    out: Vec<Branch>,
}

impl Merger {
    fn add(&mut self, prob: f64, next: EnvState, cost: f64) {
        let key = (next, cost.to_bits());
        match self.index.get(&key) {
            Some(&i) => self.out[i].prob += prob,
            None => {
                self.index.insert(key.clone(), self.out.len());
                self.out.push(Branch { prob, next: key.0, cost });
            }
        }
    }
}

impl Env {
    /// Distribution of the initial state.
    pub fn initial_distribution(&self) -> Vec<(f64, EnvState)> {
        let mut combos: Vec<(f64, Vec<StateId>)> = vec![(1.0, Vec::new())];
        for r in self.instance.resources() {
            let mut next = Vec::new();
            for (p, states) in &combos {
                for &(s, q) in self.instance.initial(r).support() {
                    let mut v = states.clone();
                    v.push(s);
                    next.push((p * q, v));
                }
            }
            combos = next;
        }
        combos.into_iter().map(|(p, s)| (p, self.state_from(&s))).collect()
    }

    /// Distribution of one elementary transition.
    pub fn step_distribution(&self, state: &EnvState, action: ControlAction) -> Vec<Branch> {
        match action {
            ControlAction::Wait => self.tick_distribution(state, state.now + 1).into_iter().map(|(b, _)| b).collect(),
            a => {
                // assignments and selections are deterministic
                let mut rng = rand::rngs::mock::StepRng::new(0, 0);
                let out = self.step(state, a, &mut rng);
                vec![Branch { prob: 1.0, next: out.next, cost: out.cost }]
            }
        }
    }

    fn tick_distribution(&self, state: &EnvState, to: u32) -> Vec<(Branch, bool)> {
        type Partial = (f64, Vec<(ResourceId, StateId)>);
        let mut combos: Vec<Partial> = vec![(1.0, Vec::new())];
        for (ri, rs) in state.resources.iter().enumerate() {
            let Some(op) = rs.running else { continue };
            let cap = self.instance.capability(rs.state, op).expect("running op has a capability");
            let rate = cap.duration.completion_rate(to - rs.start).expect("operation outlived its duration support");
            let mut next = Vec::with_capacity(combos.len() * 2);
            for (p, done) in &combos {
                if rate < 1.0 {
                    next.push((p * (1.0 - rate), done.clone()));
                }
                if rate > 0.0 {
                    for &(e, q) in cap.effect.support() {
                        let mut d = done.clone();
                        d.push((ResourceId(ri as u32), e));
                        next.push((p * rate * q, d));
                    }
                }
            }
            combos = next;
        }
        combos
            .into_iter()
            .map(|(p, done)| {
                let mut next = state.clone();
                next.now = to;
                let (cost, _) = self.finish_ops(state, &mut next, &done);
                (Branch { prob: p, next, cost }, !done.is_empty())
            })
            .collect()
    }

    fn wait_to_event_distribution(&self, state: &EnvState, acc_prob: f64, acc_cost: f64, out: &mut Merger) {
        let to = self.next_event_time(state).expect("wait with nothing running");
        for (b, any) in self.tick_distribution(state, to) {
            let p = acc_prob * b.prob;
            let c = acc_cost + b.cost;
            if any || self.status(&b.next) != Status::Running {
                out.add(p, b.next, c);
            } else {
                self.wait_to_event_distribution(&b.next, p, c, out);
            }
        }
    }

    fn wait_distribution(&self, state: &EnvState) -> Vec<Branch> {
        if self.config.skip_waits {
            let mut m = Merger::default();
            self.wait_to_event_distribution(state, 1.0, 0.0, &mut m);
            m.out
        } else {
            self.step_distribution(state, ControlAction::Wait)
        }
    }

    /// Distribution of [`Env::decide`]: the action followed by automatic
    /// waits.
    pub fn decide_distribution(&self, state: &EnvState, action: ControlAction) -> Vec<Branch> {
        let first = match action {
            ControlAction::Wait => self.wait_distribution(state),
            a => self.step_distribution(state, a),
        };
        let mut m = Merger::default();
        let mut stack: Vec<Branch> = first;
        while let Some(b) = stack.pop() {
            if self.only_wait(&b.next) {
                for w in self.wait_distribution(&b.next) {
                    stack.push(Branch { prob: b.prob * w.prob, next: w.next, cost: b.cost + w.cost });
                }
            } else {
                m.add(b.prob, b.next, b.cost);
            }
        }
        m.out
    }

    /// Expected decision-level cost of an action.
    pub fn expected_decision_cost(&self, state: &EnvState, action: ControlAction) -> f64 {
        self.decide_distribution(state, action).iter().map(|b| b.prob * b.cost).sum()
    }
}
