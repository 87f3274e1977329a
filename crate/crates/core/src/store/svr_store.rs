use std::collections::{HashMap, VecDeque};

use super::{QValueStore, WriteOutcome};
use crate::features::{normalize, FeatureVector};
use crate::svr::{train, SvrError, SvrModel, SvrParams, TrainingSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrStoreConfig {
    /// `None` picks defaults from the feature dimension.
    pub params: Option<SvrParams>,
    /// Sliding window of most recent samples.
    pub window: usize,
    /// Refit after every `refit_every` episodes.
    pub refit_every: usize,
    pub q0: f64,
}

impl Default for SvrStoreConfig {
    fn default() -> Self {
        Self { params: None, window: 50_000, refit_every: 25, q0: 0.0 }
    }
}

type InputKey = Vec<u64>;

/// Fitted-Q backend: writes become regression samples, reads evaluate the
/// last fitted model.
#[derive(Debug)]
pub struct SvrStore {
    bounds: Vec<(f64, f64)>,
    config: SvrStoreConfig,
    params: SvrParams,
    model: Option<SvrModel>,
    samples: HashMap<InputKey, (Vec<f64>, f64, u64)>,
    order: VecDeque<(InputKey, u64)>,
    visits: HashMap<InputKey, u32>,
    seq: u64,
    refits: usize,
}

impl SvrStore {
    pub fn new(bounds: Vec<(f64, f64)>, config: SvrStoreConfig) -> Self {
        let params = config.params.unwrap_or_else(|| SvrParams::for_dim(bounds.len()));
        Self {
            bounds,
            config,
            params,
            model: None,
            samples: HashMap::new(),
            order: VecDeque::new(),
            visits: HashMap::new(),
            seq: 0,
            refits: 0,
        }
    }

    fn key(features: &FeatureVector) -> InputKey {
        features.values.iter().map(|v| v.to_bits()).collect()
    }

    pub fn model(&self) -> Option<&SvrModel> {
        self.model.as_ref()
    }

    pub fn refits(&self) -> usize {
        self.refits
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    /// Fits the model to the current sample window.
    pub fn refit(&mut self) {
        if self.samples.is_empty() {
            return;
        }
        let mut data: Vec<(u64, TrainingSample)> =
            self.samples.values().map(|(x, y, s)| (*s, TrainingSample::new(x.clone(), *y))).collect();
        data.sort_by_key(|d| d.0);
        let data: Vec<TrainingSample> = data.into_iter().map(|d| d.1).collect();
        self.refits += 1;
        match train(&data, &self.params) {
            Ok(fit) => self.model = Some(fit.model),
            Err(SvrError::NotConverged(fit)) => {
                log::warn!("svr refit stopped at the iteration cap (KKT residual {})", fit.kkt_residual);
                self.model = Some(fit.model);
            }
            Err(e) => log::warn!("svr refit failed: {e}"),
        }
    }

    fn predict(&self, features: &FeatureVector) -> Option<f64> {
        let m = self.model.as_ref()?;
        Some(m.predict(&normalize(features, &self.bounds).values))
    }
}

impl QValueStore for SvrStore {
    fn read(&self, features: &FeatureVector) -> f64 {
        self.lookup(features).unwrap_or(self.config.q0)
    }

    fn lookup(&self, features: &FeatureVector) -> Option<f64> {
        self.predict(features).or_else(|| self.samples.get(&Self::key(features)).map(|s| s.1))
    }

    fn visits(&self, features: &FeatureVector) -> u32 {
        self.visits.get(&Self::key(features)).copied().unwrap_or(0)
    }

    fn write(&mut self, features: &FeatureVector, value: f64, _tag: u32) -> WriteOutcome {
        let key = Self::key(features);
        *self.visits.entry(key.clone()).or_insert(0) += 1;
        self.seq += 1;
        let input = normalize(features, &self.bounds).values;
        self.samples.insert(key.clone(), (input, value, self.seq));
        self.order.push_back((key, self.seq));
        while self.samples.len() > self.config.window {
            let Some((k, s)) = self.order.pop_front() else { break };
            if self.samples.get(&k).is_some_and(|e| e.2 == s) {
                self.samples.remove(&k);
            }
        }
        // drop stale order entries at the front
        while let Some((k, s)) = self.order.front() {
            if self.samples.get(k).is_some_and(|e| e.2 == *s) {
                break;
            }
            self.order.pop_front();
        }
        WriteOutcome::Sampled
    }

    fn end_episode(&mut self, episode: usize) {
        if (episode + 1) % self.config.refit_every.max(1) == 0 {
            self.refit();
        }
    }

    fn clear(&mut self) {
        self.model = None;
        self.samples.clear();
        self.order.clear();
        self.visits.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_keeps_newest_target_per_input() {
        let cfg = SvrStoreConfig { window: 2, refit_every: 1, ..SvrStoreConfig::default() };
        let mut s = SvrStore::new(vec![(0.0, 4.0)], cfg);
        let f = |x: f64| FeatureVector { values: vec![x] };
        s.write(&f(1.0), 5.0, 0);
        s.write(&f(1.0), 6.0, 0);
        assert_eq!(s.num_samples(), 1);
        assert_eq!(s.lookup(&f(1.0)), Some(6.0));
        assert_eq!(s.visits(&f(1.0)), 2);
        s.write(&f(2.0), 1.0, 0);
        s.write(&f(3.0), 1.0, 0);
        assert_eq!(s.num_samples(), 2);
        assert_eq!(s.lookup(&f(1.0)), None);
        s.end_episode(0);
        assert_eq!(s.refits(), 1);
        assert!((s.read(&f(2.0)) - 1.0).abs() < 1e-3);
    }
}
