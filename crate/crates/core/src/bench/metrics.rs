//! Error statistics and the slack ratio.

use thiserror::Error;

use crate::rap::TaskWindow;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("job {0} has due date equal to its release date")]
    EmptyWindow(usize),
    #[error("finish times and windows differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("no samples")]
    NoSamples,
}

/// `Φ = (1/n) Σ (B − F) / (B − A)` over jobs.
pub fn slack_ratio(finish: &[u32], windows: &[TaskWindow]) -> Result<f64, MetricError> {
    if finish.len() != windows.len() {
        return Err(MetricError::Length(finish.len(), windows.len()));
    }
    if finish.is_empty() {
        return Err(MetricError::NoSamples);
    }
    let mut sum = 0.0;
    for (j, (&f, w)) in finish.iter().zip(windows).enumerate() {
        if w.due == w.release {
            return Err(MetricError::EmptyWindow(j));
        }
        sum += job_slack(f, *w);
    }
    Ok(sum / finish.len() as f64)
}

pub(crate) fn job_slack(finish: u32, w: TaskWindow) -> f64 {
    (w.due as f64 - finish as f64) / (w.due as f64 - w.release as f64)
}

/// Mean and population standard deviation of `G − J*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub std_dev: f64,
    /// Mean error in percent of `J*`, or the absolute mean when `J* = 0`.
    pub relative: f64,
    pub samples: usize,
}

pub fn error_stats(costs: &[f64], optimum: f64) -> Result<ErrorStats, MetricError> {
    if costs.is_empty() {
        return Err(MetricError::NoSamples);
    }
    let n = costs.len() as f64;
    let mean = costs.iter().map(|g| g - optimum).sum::<f64>() / n;
    let var = costs.iter().map(|g| (g - optimum - mean).powi(2)).sum::<f64>() / n;
    let relative = if optimum > 0.0 { 100.0 * mean / optimum } else { mean };
    Ok(ErrorStats { mean, std_dev: var.sqrt(), relative, samples: costs.len() })
}

/// Relative error in percent (absolute when `optimum` is zero).
pub fn relative_error(cost: f64, optimum: f64) -> f64 {
    if optimum > 0.0 {
        100.0 * (cost - optimum) / optimum
    } else {
        cost - optimum
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(release: u32, due: u32) -> TaskWindow {
        TaskWindow { release, due }
    }

    #[test]
    fn slack_examples() {
        assert!((slack_ratio(&[8], &[w(0, 10)]).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(slack_ratio(&[10, 7], &[w(0, 10), w(3, 7)]).unwrap(), 0.0);
        // 0.4 and -0.2
        let phi = slack_ratio(&[6, 12], &[w(0, 10), w(0, 10)]).unwrap();
        assert!((phi - 0.1).abs() < 1e-12);
        assert_eq!(slack_ratio(&[1], &[w(4, 4)]), Err(MetricError::EmptyWindow(0)));
    }

    #[test]
    fn error_examples() {
        let s = error_stats(&[10.0, 12.0], 10.0).unwrap();
        assert_eq!((s.mean, s.std_dev, s.relative), (1.0, 1.0, 10.0));
        let s = error_stats(&[5.0, 5.0], 5.0).unwrap();
        assert_eq!((s.mean, s.std_dev), (0.0, 0.0));
        assert_eq!(error_stats(&[7.0], 3.0).unwrap().std_dev, 0.0);
        assert_eq!(error_stats(&[2.0, 4.0], 0.0).unwrap().relative, 3.0);
        assert!(error_stats(&[], 1.0).is_err());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
