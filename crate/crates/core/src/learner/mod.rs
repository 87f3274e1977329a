//! Fitted Q-learning over the SSP environment: softmin exploration with
//! annealing, reverse-order updates, the deterministic min-update variant,
//! and rollout warm start.

mod agent;
mod policy;
mod tabular;

use thiserror::Error;

use crate::env::{Completion, ControlAction, EnvState, Status};
use crate::features::FeatureVector;

pub use agent::{Checkpoint, EpisodeRecord, Learner, StopRule, TrainOptions, TrainReport};
pub use policy::{base_policy_action, rollout_action, rollout_estimates, FrozenControl, Policy};
pub use tabular::{backup_sweeps, enumerate_decision_states, initial_value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureMode {
    /// `τ_i = max(floor, τ0 · decay^i)`.
    Geometric,
    /// `τ_i = max(floor, τ0 / ln(e + i))`.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    pub tau0: f64,
    pub decay: f64,
    pub floor: f64,
    pub mode: TemperatureMode,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self { tau0: 10.0, decay: 0.999, floor: 0.05, mode: TemperatureMode::Geometric }
    }
}

impl TemperatureSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        let t = match self.mode {
            TemperatureMode::Geometric => self.tau0 * self.decay.powf(episode as f64),
            TemperatureMode::Logarithmic => self.tau0 / (std::f64::consts::E + episode as f64).ln(),
        };
        t.max(self.floor)
    }
}

/// `γ = γ0 / (1 + visits)^ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRate {
    pub gamma0: f64,
    pub omega: f64,
}

impl Default for LearningRate {
    fn default() -> Self {
        Self { gamma0: 1.0, omega: 0.85 }
    }
}

impl LearningRate {
    pub fn at(&self, visits: u32) -> f64 {
        (self.gamma0 / (1.0 + visits as f64).powf(self.omega)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub discount: f64,
    pub temperature: TemperatureSchedule,
    pub learning_rate: LearningRate,
    pub episodes: usize,
    /// Episodes driven by the rollout policy before softmin takes over.
    pub warmup: usize,
    /// Rollout simulations per action on stochastic instances.
    pub rollout_samples: usize,
    /// `None` detects determinism from the instance.
    pub deterministic: Option<bool>,
    /// Episodes in the running cost scale used before softmin.
    pub scale_window: usize,
    /// Deterministic mode: value unseen actions at the best seen value plus
    /// this many cost scales during softmin exploration; states with no seen
    /// action follow the base policy.
    pub unseen_margin: Option<f64>,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            discount: 0.95,
            temperature: TemperatureSchedule::default(),
            learning_rate: LearningRate::default(),
            episodes: 1000,
            warmup: 50,
            rollout_samples: 5,
            deterministic: None,
            scale_window: 100,
            unseen_margin: None,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    /// Discount by instance size: 0.95 up to 500 tasks, 0.99 above.
    pub fn discount_for(num_tasks: usize) -> f64 {
        if num_tasks <= 500 {
            0.95
        } else {
            0.99
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LearnerError {
    #[error("episode exceeded {0} decisions")]
    EpisodeTooLong(usize),
    #[error("store and feature schema disagree: {0}")]
    Schema(String),
}

/// Softmin (Boltzmann) probabilities `exp(-q/τ) / Σ exp(-q/τ)`.
pub fn softmin_probabilities(q: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau > 0.0 && !q.is_empty());
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = q.iter().map(|&v| (-(v - min) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `g + α · min Q(next)`; `None` means the successor is terminal.
pub fn q_target(cost: f64, discount: f64, next_min: Option<f64>) -> f64 {
    match next_min {
        Some(m) if discount != 0.0 => cost + discount * m,
        _ => cost,
    }
}

/// One value update. The deterministic variant keeps the minimum and stores
/// the target on first write (`old = None`).
pub fn q_update(old: Option<f64>, target: f64, gamma: f64, deterministic: bool) -> f64 {
    match (old, deterministic) {
        (None, _) => target,
        (Some(o), true) => o.min(target),
        (Some(o), false) => (1.0 - gamma) * o + gamma * target,
    }
}

/// One learner decision of an episode.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub state: EnvState,
    pub action: ControlAction,
    pub features: FeatureVector,
    /// Cost until the next learner decision (or the end of the episode).
    pub cost: f64,
    /// Feature vectors of the learner actions at the next decision;
    /// `None` when the episode ended.
    pub next: Option<Vec<FeatureVector>>,
    /// Rollout estimates of the actions not taken.
    pub alternatives: Vec<(FeatureVector, f64)>,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub initial: EnvState,
    pub steps: Vec<TraceStep>,
    pub status: Status,
    /// Undiscounted episode cost, including costs before the first learner
    /// decision.
    pub total_cost: f64,
    pub completions: Vec<Completion>,
    pub final_state: EnvState,
}
