//! Finite discrete distributions for durations, effects and initial states.

use rand::Rng;
use thiserror::Error;

use super::StateId;

/// Tolerance on `sum(p) == 1`.
pub const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("distribution has empty support")]
    Empty,
    #[error("probability {0} is not strictly positive")]
    NonPositive(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("duration {0} is not a positive integer")]
    ZeroDuration(u32),
    #[error("elapsed time {elapsed} exceeds the largest possible duration {max}")]
    Exhausted { elapsed: u32, max: u32 },
}

fn check_probs<T>(support: &[(T, f64)]) -> Result<(), DistError> {
    if support.is_empty() {
        return Err(DistError::Empty);
    }
    let mut total = 0.0;
    for &(_, p) in support {
        if !(p > 0.0) {
            return Err(DistError::NonPositive(p));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(DistError::NotNormalized(total));
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, len: usize, rng: &mut R) -> usize {
    if len == 1 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    len - 1
}

/// Distribution over resource states, used for operation effects and
/// initial resource states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDist {
    support: Vec<(StateId, f64)>,
}

pub type EffectDist = StateDist;
pub type InitialDist = StateDist;

impl StateDist {
    pub fn new(mut support: Vec<(StateId, f64)>) -> Result<Self, DistError> {
        check_probs(&support)?;
        support.sort_by_key(|&(s, _)| s);
        Ok(Self { support })
    }

    pub fn point(state: StateId) -> Self {
        Self { support: vec![(state, 1.0)] }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn is_point_mass(&self) -> bool {
        self.support.len() == 1
    }

    pub fn probability(&self, state: StateId) -> f64 {
        self.support
            .iter()
            .find(|&&(s, _)| s == state)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateId {
        let i = sample_index(self.support.iter().map(|&(_, p)| p), self.support.len(), rng);
        self.support[i].0
    }

    pub(crate) fn from_raw(support: Vec<(StateId, f64)>) -> Self {
        Self { support }
    }
}

/// Distribution of an operation's duration, with finite support of positive
/// integers. Completion rates are tabulated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationDist {
    pmf: Vec<(u32, f64)>,
    /// `hazard[e] = P(D = e) / P(D >= e)`, indexed by elapsed time.
    hazard: Vec<f64>,
    mean: f64,
}

impl DurationDist {
    pub fn new(mut support: Vec<(u32, f64)>) -> Result<Self, DistError> {
        check_probs(&support)?;
        if let Some(&(d, _)) = support.iter().find(|&&(d, _)| d == 0) {
            return Err(DistError::ZeroDuration(d));
        }
        support.sort_by_key(|&(d, _)| d);
        // merge duplicates
        let mut pmf: Vec<(u32, f64)> = Vec::with_capacity(support.len());
        for (d, p) in support {
            match pmf.last_mut() {
                Some(last) if last.0 == d => last.1 += p,
                _ => pmf.push((d, p)),
            }
        }
        let max = pmf.last().unwrap().0 as usize;
        let mut point = vec![0.0; max + 1];
        for &(d, p) in &pmf {
            point[d as usize] = p;
        }
        let mut hazard = vec![0.0; max + 1];
        let mut tail = 0.0;
        for e in (0..=max).rev() {
            tail += point[e];
            hazard[e] = if point[e] == 0.0 { 0.0 } else { point[e] / tail };
        }
        hazard[max] = 1.0;
        let mean = pmf.iter().map(|&(d, p)| d as f64 * p).sum();
        Ok(Self { pmf, hazard, mean })
    }

    pub fn point(duration: u32) -> Result<Self, DistError> {
        Self::new(vec![(duration, 1.0)])
    }

    pub fn support(&self) -> &[(u32, f64)] {
        &self.pmf
    }

    pub fn is_point_mass(&self) -> bool {
        self.pmf.len() == 1
    }

    pub fn min(&self) -> u32 {
        self.pmf[0].0
    }

    pub fn max(&self) -> u32 {
        self.pmf.last().unwrap().0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn probability(&self, duration: u32) -> f64 {
        self.pmf
            .iter()
            .find(|&&(d, _)| d == duration)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Probability that an operation which has been running for `elapsed`
    /// time units without finishing finishes exactly now.
    pub fn completion_rate(&self, elapsed: u32) -> Result<f64, DistError> {
        match self.hazard.get(elapsed as usize) {
            Some(&h) => Ok(h),
            None => Err(DistError::Exhausted { elapsed, max: self.max() }),
        }
    }

    /// Smallest support point `>= elapsed`; the first tick at which a
    /// completion can happen.
    pub(crate) fn next_possible(&self, elapsed: u32) -> Option<u32> {
        self.pmf.iter().map(|&(d, _)| d).find(|&d| d >= elapsed)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let i = sample_index(self.pmf.iter().map(|&(_, p)| p), self.pmf.len(), rng);
        self.pmf[i].0
    }
}

/// Free-function form of [`DurationDist::completion_rate`] taking absolute
/// start and current times.
pub fn completion_rate(dist: &DurationDist, start: u32, now: u32) -> Result<f64, DistError> {
    dist.completion_rate(now.saturating_sub(start))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tail_rate(pmf: &[(u32, f64)], elapsed: u32) -> f64 {
        let at: f64 = pmf.iter().filter(|&&(d, _)| d == elapsed).map(|&(_, p)| p).sum();
        let tail: f64 = pmf.iter().filter(|&&(d, _)| d >= elapsed).map(|&(_, p)| p).sum();
        at / tail
    }

    #[test]
    fn point_mass_rate() {
        let d = DurationDist::point(4).unwrap();
        for e in 0..4 {
            assert_eq!(d.completion_rate(e).unwrap(), 0.0);
        }
        assert_eq!(d.completion_rate(4).unwrap(), 1.0);
        assert!(d.completion_rate(5).is_err());
    }

    #[test]
    fn uniform_two_point_rate() {
        let d = DurationDist::new(vec![(1, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(d.completion_rate(1).unwrap(), 0.5);
        assert_eq!(d.completion_rate(2).unwrap(), 1.0);
        assert_eq!(completion_rate(&d, 10, 11).unwrap(), 0.5);
    }

    #[test]
    fn truncated_geometric_rate_is_constant() {
        let p = 0.3;
        let k_max = 12;
        let mut pmf: Vec<(u32, f64)> = (1..k_max).map(|k| (k, p * (1.0f64 - p).powi(k as i32 - 1))).collect();
        pmf.push((k_max, (1.0f64 - p).powi(k_max as i32 - 1)));
        let d = DurationDist::new(pmf.clone()).unwrap();
        for k in 1..k_max {
            let oracle = tail_rate(&pmf, k);
            assert!((oracle - p).abs() < 1e-12);
            assert!((d.completion_rate(k).unwrap() - oracle).abs() < 1e-12);
        }
        assert_eq!(d.completion_rate(k_max).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_supports() {
        assert_eq!(DurationDist::new(vec![]), Err(DistError::Empty));
        assert!(matches!(DurationDist::new(vec![(0, 1.0)]), Err(DistError::ZeroDuration(0))));
        assert!(matches!(DurationDist::new(vec![(1, 0.5), (2, 0.4)]), Err(DistError::NotNormalized(_))));
        assert!(matches!(StateDist::new(vec![(StateId(0), 0.0), (StateId(1), 1.0)]), Err(DistError::NonPositive(_))));
    }

    #[test]
    fn sampling_frequencies() {
        use rand::SeedableRng;
        let d = StateDist::new(vec![(StateId(0), 0.5), (StateId(1), 0.5)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let hits = (0..n).filter(|_| d.sample(&mut rng) == StateId(0)).count();
        let freq = hits as f64 / n as f64;
        // 3 sigma of Binomial(10^4, 0.5) is 0.015
        assert!((freq - 0.5).abs() <= 0.015, "{freq}");
    }
}
