use std::fmt;

use super::{OpId, RapInstance, ResourceId, StateId};

/// One violated structural assumption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    NoResources,
    NoStates,
    NoOperations,
    MissingInitial(ResourceId),
    UnknownId { what: &'static str, state: StateId, op: OpId },
    /// `dom(d) != dom(e)`; `missing` names the map lacking the pair.
    DomainMismatch { state: StateId, op: OpId, missing: &'static str },
    PrecedenceOnNonTask(OpId, OpId),
    CyclicPrecedence(Vec<OpId>),
    UncoveredTask(OpId),
    /// No resource state from which the task can run is reachable from the
    /// initial states.
    UnreachableTask(OpId),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoResources => write!(f, "empty resource set"),
            Issue::NoStates => write!(f, "empty resource-state set"),
            Issue::NoOperations => write!(f, "empty operation set"),
            Issue::MissingInitial(r) => write!(f, "resource {r} has no valid initial-state distribution"),
            Issue::UnknownId { what, state, op } => write!(f, "{what} entry ({state}, {op}) references an unknown id"),
            Issue::DomainMismatch { state, op, missing } => {
                write!(f, "domain mismatch: ({state}, {op}) has no {missing}")
            }
            Issue::PrecedenceOnNonTask(u, v) => write!(f, "precedence <{u}, {v}> involves a non-task operation"),
            Issue::CyclicPrecedence(c) => {
                let ids: Vec<String> = c.iter().map(|o| o.to_string()).collect();
                write!(f, "cyclic precedence: {}", ids.join(" -> "))
            }
            Issue::UncoveredTask(t) => write!(f, "task {t} cannot be executed from any resource state"),
            Issue::UnreachableTask(t) => write!(f, "task {t} is not executable from any reachable resource state"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, pred: impl Fn(&Issue) -> bool) -> bool {
        self.issues.iter().any(pred)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Lists every violated structural invariant. An empty report means the
/// instance is usable by the environment and learners.
pub fn validate_instance(instance: &RapInstance) -> ValidationReport {
    let mut issues = Vec::new();
    let n_states = instance.num_states();
    let n_ops = instance.num_ops();

    if instance.num_resources() == 0 {
        issues.push(Issue::NoResources);
    }
    if n_states == 0 {
        issues.push(Issue::NoStates);
    }
    if n_ops == 0 {
        issues.push(Issue::NoOperations);
    }
    for r in instance.resources() {
        let init = instance.initial(r);
        if init.support().is_empty() || init.support().iter().any(|&(s, _)| s.index() >= n_states) {
            issues.push(Issue::MissingInitial(r));
        }
    }

    let mut keys: Vec<_> = instance.raw_durations().keys().copied().collect();
    keys.sort();
    for &(s, o) in &keys {
        if s.index() >= n_states || o.index() >= n_ops {
            issues.push(Issue::UnknownId { what: "duration", state: s, op: o });
        } else if !instance.raw_effects().contains_key(&(s, o)) {
            issues.push(Issue::DomainMismatch { state: s, op: o, missing: "effect" });
        }
    }
    let mut effect_keys: Vec<_> = instance.raw_effects().iter().collect();
    effect_keys.sort_by_key(|(k, _)| **k);
    for (&(s, o), dist) in effect_keys {
        if s.index() >= n_states || o.index() >= n_ops || dist.support().iter().any(|&(e, _)| e.index() >= n_states) {
            issues.push(Issue::UnknownId { what: "effect", state: s, op: o });
        } else if !instance.raw_durations().contains_key(&(s, o)) {
            issues.push(Issue::DomainMismatch { state: s, op: o, missing: "duration" });
        }
    }

    for &(u, v) in instance.precedence() {
        if !instance.is_task(u) || !instance.is_task(v) {
            issues.push(Issue::PrecedenceOnNonTask(u, v));
        }
    }
    if let Some(cycle) = find_cycle(instance) {
        issues.push(Issue::CyclicPrecedence(cycle));
    }

    let reachable = reachable_states(instance);
    for &t in instance.tasks() {
        let capable = instance.capable_states(t);
        if capable.is_empty() {
            issues.push(Issue::UncoveredTask(t));
        } else if !instance.is_cancelled(t) && !capable.iter().any(|s| reachable[s.index()]) {
            issues.push(Issue::UnreachableTask(t));
        }
    }

    ValidationReport { issues }
}

fn find_cycle(instance: &RapInstance) -> Option<Vec<OpId>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let n = instance.num_ops();
    let mut color = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(top) = stack.last_mut() {
            let (u, next) = *top;
            let succs = instance.successors(OpId(u as u32));
            if next < succs.len() {
                top.1 += 1;
                let v = succs[next].index();
                match color[v] {
                    0 => {
                        color[v] = 1;
                        parent[v] = u;
                        stack.push((v, 0));
                    }
                    1 => {
                        let mut cycle = vec![OpId(v as u32)];
                        let mut w = u;
                        while w != v {
                            cycle.push(OpId(w as u32));
                            w = parent[w];
                        }
                        cycle.push(OpId(v as u32));
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// States reachable from any initial state through operation effects.
pub(crate) fn reachable_states(instance: &RapInstance) -> Vec<bool> {
    let n = instance.num_states();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    for r in instance.resources() {
        if instance.is_disabled(r) {
            continue;
        }
        for &(s, _) in instance.initial(r).support() {
            if s.index() < n && !seen[s.index()] {
                seen[s.index()] = true;
                stack.push(s);
            }
        }
    }
    while let Some(s) = stack.pop() {
        for &o in instance.ops_for_state(s) {
            if let Some(effect) = instance.effect(s, o) {
                for &(e, _) in effect.support() {
                    if !seen[e.index()] {
                        seen[e.index()] = true;
                        stack.push(e);
                    }
                }
            }
        }
    }
    seen
}
