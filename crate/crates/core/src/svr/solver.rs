use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use super::{kernel, KernelSpec, SvrError, SvrFit, SvrModel, SvrParams, TrainingSample};

const TAU: f64 = 1e-12;
const BOUND_EPS: f64 = 1e-12;

struct ColumnCache<'a> {
    samples: &'a [TrainingSample],
    spec: KernelSpec,
    cols: HashMap<usize, Rc<[f64]>>,
    order: VecDeque<usize>,
    cap: usize,
}

impl<'a> ColumnCache<'a> {
    fn new(samples: &'a [TrainingSample], spec: KernelSpec, cache_mb: usize) -> Self {
        let per_col = samples.len() * std::mem::size_of::<f64>();
        let cap = ((cache_mb << 20) / per_col.max(1)).max(2);
        Self { samples, spec, cols: HashMap::new(), order: VecDeque::new(), cap }
    }

    fn column(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(c) = self.cols.get(&i) {
            return c.clone();
        }
        let xi = &self.samples[i].input;
        let col: Rc<[f64]> = self.samples.iter().map(|s| kernel(xi, &s.input, self.spec)).collect();
        if self.cols.len() >= self.cap {
            if let Some(old) = self.order.pop_front() {
                self.cols.remove(&old);
            }
        }
        self.cols.insert(i, col.clone());
        self.order.push_back(i);
        col
    }
}

/// Trains a ν-SVR model. On hitting the iteration cap, the error carries the
/// best-so-far fit and its KKT residual.
pub fn train(samples: &[TrainingSample], params: &SvrParams) -> Result<SvrFit, SvrError> {
    let l = samples.len();
    if l == 0 {
        return Err(SvrError::Empty);
    }
    if !(params.nu > 0.0 && params.nu <= 1.0) || !(params.c > 0.0) || !(params.kernel.sigma > 0.0) {
        return Err(SvrError::Params(format!("C = {}, nu = {}, sigma = {}", params.c, params.nu, params.kernel.sigma)));
    }
    let dim = samples[0].input.len();
    if let Some(i) = samples.iter().position(|s| s.input.len() != dim) {
        return Err(SvrError::Dimension(i));
    }

    let upper = params.c / l as f64;
    let half_sum = params.c * params.nu / 2.0;
    // a[i] = α*_i (sign +1), a[l + i] = α_i (sign -1)
    let mut a = vec![0.0; 2 * l];
    let mut rest = half_sum;
    for i in 0..l {
        let v = rest.min(upper);
        a[i] = v;
        a[l + i] = v;
        rest -= v;
    }
    // grad[i] = (Kβ)_i - y_i; G of α*_i is grad[i], of α_i is -grad[i]
    let mut grad: Vec<f64> = samples.iter().map(|s| -s.target).collect();
    let g = |grad: &[f64], t: usize| if t < l { grad[t] } else { -grad[t - l] };

    let mut cache = ColumnCache::new(samples, params.kernel, params.cache_mb);
    let max_iter = params.max_iter_factor.saturating_mul(l).max(1);
    let mut iterations = 0;
    let mut residual;
    loop {
        // per half: i maximizes -G over a < U; violation against min -G over a > 0
        let mut best: Option<(usize, f64)> = None;
        residual = 0.0f64;
        for half in 0..2 {
            let range = half * l..(half + 1) * l;
            let mut up: Option<(usize, f64)> = None;
            let mut low = f64::INFINITY;
            for t in range {
                let mg = -g(&grad, t);
                if a[t] < upper && up.map_or(true, |(_, v)| mg > v) {
                    up = Some((t, mg));
                }
                if a[t] > 0.0 {
                    low = low.min(mg);
                }
            }
            if let Some((t, v)) = up {
                let viol = v - low;
                if viol > residual {
                    residual = viol;
                    best = Some((t, v));
                }
            }
        }
        if residual <= params.tolerance || best.is_none() {
            break;
        }
        if iterations >= max_iter {
            let fit = finish(samples, params, a, &grad, iterations, residual, dim);
            return Err(SvrError::NotConverged(Box::new(fit)));
        }
        iterations += 1;

        let (i, mgi) = best.unwrap();
        let half = i / l;
        let si = i % l;
        let gi = -mgi;
        let ki = cache.column(si);
        let mut pick: Option<(usize, f64, f64)> = None;
        for t in half * l..(half + 1) * l {
            if a[t] <= 0.0 {
                continue;
            }
            let gt = g(&grad, t);
            let diff = gt - gi;
            if diff <= 0.0 {
                continue;
            }
            let quad = (2.0 - 2.0 * ki[t % l]).max(TAU);
            let gain = diff * diff / quad;
            if pick.map_or(true, |(_, best_gain, _)| gain > best_gain) {
                pick = Some((t, gain, quad));
            }
        }
        let Some((j, _, quad)) = pick else { break };
        let sj = j % l;
        let diff = g(&grad, j) - gi;
        let mut delta = (diff / quad).min(upper - a[i]).min(a[j]);
        // land exactly on a bound when within rounding of it, so free/bound status is order-independent
        let snap = BOUND_EPS * upper;
        if upper - a[i] - delta <= snap && upper - a[i] <= a[j] {
            delta = upper - a[i];
        } else if a[j] - delta <= snap {
            delta = a[j];
        }
        a[i] = if delta == upper - a[i] { upper } else { a[i] + delta };
        a[j] = if delta == a[j] { 0.0 } else { a[j] - delta };
        let z = if half == 0 { 1.0 } else { -1.0 };
        let kj = cache.column(sj);
        for (s, gs) in grad.iter_mut().enumerate() {
            *gs += z * delta * (ki[s] - kj[s]);
        }
    }
    Ok(finish(samples, params, a, &grad, iterations, residual, dim))
}

fn finish(
    samples: &[TrainingSample],
    params: &SvrParams,
    a: Vec<f64>,
    grad: &[f64],
    iterations: usize,
    residual: f64,
    dim: usize,
) -> SvrFit {
    let l = samples.len();
    let upper = params.c / l as f64;
    let snap = BOUND_EPS * upper;
    let lambda = |half: usize| -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..l {
            let t = half * l + i;
            let gt = if half == 0 { grad[i] } else { -grad[i] };
            if a[t] > snap && a[t] < upper - snap {
                sum += gt;
                n += 1;
            } else if a[t] >= upper - snap {
                lb = lb.max(gt);
            } else {
                ub = ub.min(gt);
            }
        }
        if n > 0 {
            sum / n as f64
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) / 2.0
        } else if ub.is_finite() {
            ub
        } else {
            lb
        }
    };
    let (lp, ln) = (lambda(0), lambda(1));
    let b = (ln - lp) / 2.0;
    let epsilon = -(lp + ln) / 2.0;

    let mut alpha_star = a[..l].to_vec();
    let mut alpha = a[l..].to_vec();
    for i in 0..l {
        let m = alpha[i].min(alpha_star[i]);
        alpha[i] -= m;
        alpha_star[i] -= m;
    }
    let mut support = Vec::new();
    let mut beta = Vec::new();
    for i in 0..l {
        let bi = alpha_star[i] - alpha[i];
        if bi != 0.0 {
            support.push(samples[i].input.clone());
            beta.push(bi);
        }
    }
    let model = SvrModel {
        l,
        c: params.c,
        nu: params.nu,
        kernel: params.kernel,
        dim,
        b,
        epsilon,
        support,
        beta,
    };
    SvrFit { model, alpha, alpha_star, iterations, kkt_residual: residual }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_is_interpolated() {
        let s = [TrainingSample::new(vec![0.3, 0.6], 4.2)];
        let fit = train(&s, &SvrParams::for_dim(2)).unwrap();
        assert!((fit.model.predict(&[0.3, 0.6]) - 4.2).abs() < 1e-6);
        assert!((fit.model.b - 4.2).abs() < 1e-6);
    }

    #[test]
    fn duplicate_samples_give_constant_model() {
        let s = [TrainingSample::new(vec![0.5], 3.0), TrainingSample::new(vec![0.5], 3.0)];
        let fit = train(&s, &SvrParams::for_dim(1)).unwrap();
        for x in [0.0, 0.5, 1.0] {
            assert!((fit.model.predict(&[x]) - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dual_feasibility_on_a_curve() {
        let samples: Vec<TrainingSample> =
            (0..40).map(|i| i as f64 / 39.0).map(|x| TrainingSample::new(vec![x], (6.0 * x).sin() * 3.0)).collect();
        let p = SvrParams::for_dim(1);
        let fit = train(&samples, &p).unwrap();
        let l = samples.len() as f64;
        let (sa, ss): (f64, f64) = (fit.alpha.iter().sum(), fit.alpha_star.iter().sum());
        assert!((sa - ss).abs() < 1e-9);
        assert!(sa + ss <= p.c * p.nu + 1e-9);
        for (a, s) in fit.alpha.iter().zip(&fit.alpha_star) {
            assert!(*a >= 0.0 && *a <= p.c / l + 1e-12);
            assert!(*s >= 0.0 && *s <= p.c / l + 1e-12);
            assert_eq!(a * s, 0.0);
        }
        assert!(fit.kkt_residual <= 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(train(&[], &SvrParams::for_dim(1)), Err(SvrError::Empty)));
        let s = [TrainingSample::new(vec![0.0], 1.0), TrainingSample::new(vec![0.0, 1.0], 1.0)];
        assert!(matches!(train(&s, &SvrParams::for_dim(1)), Err(SvrError::Dimension(1))));
        let bad = SvrParams { nu: 0.0, ..SvrParams::for_dim(1) };
        assert!(matches!(train(&s[..1], &bad), Err(SvrError::Params(_))));
    }
}
