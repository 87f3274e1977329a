//! ν-support vector regression with a Gaussian kernel.
//!
//! The dual is solved over `2l` variables (`α*` then `α`) with box
//! `[0, C/l]` and each half summing to `Cν/2`, by pairwise updates on
//! same-half pairs chosen with second-order working-set selection.

mod solver;

use std::fmt::Write as _;

use thiserror::Error;

pub use solver::train;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub sigma: f64,
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        assert!(sigma > 0.0, "kernel width must be positive");
        Self { sigma }
    }
}

/// `exp(-|x - y|^2 / (2 σ^2))`.
pub fn kernel(x: &[f64], y: &[f64], spec: KernelSpec) -> f64 {
    assert_eq!(x.len(), y.len(), "kernel arguments differ in dimension");
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * spec.sigma * spec.sigma)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: Vec<f64>,
    pub target: f64,
}

impl TrainingSample {
    pub fn new(input: Vec<f64>, target: f64) -> Self {
        Self { input, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub nu: f64,
    pub kernel: KernelSpec,
    /// Maximal KKT violation at termination.
    pub tolerance: f64,
    /// Iteration cap is `max_iter_factor * l`.
    pub max_iter_factor: usize,
    /// Kernel column cache budget in MiB.
    pub cache_mb: usize,
}

impl SvrParams {
    /// Defaults for inputs of dimension `dim`: C = 100, ν = 0.5,
    /// σ = sqrt(dim)/2.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            c: 100.0,
            nu: 0.5,
            kernel: KernelSpec::rbf((dim.max(1) as f64).sqrt() / 2.0),
            tolerance: 1e-3,
            max_iter_factor: 100_000,
            cache_mb: 256,
        }
    }
}

/// A trained regressor `f(x) = Σ β_i K(x_i, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    /// Number of training samples.
    pub l: usize,
    pub c: f64,
    pub nu: f64,
    pub kernel: KernelSpec,
    pub dim: usize,
    pub b: f64,
    pub epsilon: f64,
    pub support: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.support.iter().zip(&self.beta).map(|(sv, &b)| b * kernel(sv, x, self.kernel)).sum::<f64>() + self.b
    }

    pub fn num_support(&self) -> usize {
        self.beta.len()
    }

    /// Plain-text dump; [`SvrModel::parse`] restores it bit for bit.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "nu-svr {} {} {} {} {} {} {}",
            self.l, self.c, self.nu, self.kernel.sigma, self.b, self.epsilon, self.dim
        )
        .unwrap();
        for (sv, beta) in self.support.iter().zip(&self.beta) {
            write!(out, "{beta}").unwrap();
            for x in sv {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SvrError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(SvrError::Parse { line: 1, msg: "empty dump".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "nu-svr" {
            return Err(SvrError::Parse { line: 1, msg: "expected `nu-svr l C nu sigma b epsilon dim`".into() });
        }
        let num = |i: usize| -> Result<f64, SvrError> {
            fields[i].parse().map_err(|_| SvrError::Parse { line: 1, msg: format!("bad number `{}`", fields[i]) })
        };
        let l = fields[1].parse().map_err(|_| SvrError::Parse { line: 1, msg: "bad sample count".into() })?;
        let dim: usize = fields[7].parse().map_err(|_| SvrError::Parse { line: 1, msg: "bad dimension".into() })?;
        let mut model = SvrModel {
            l,
            c: num(2)?,
            nu: num(3)?,
            kernel: KernelSpec { sigma: num(4)? },
            b: num(5)?,
            epsilon: num(6)?,
            dim,
            support: Vec::new(),
            beta: Vec::new(),
        };
        for (i, line) in lines {
            let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| SvrError::Parse { line: i + 1, msg: "bad number".into() })?;
            if vals.len() != dim + 1 {
                return Err(SvrError::Parse { line: i + 1, msg: format!("expected {} values", dim + 1) });
            }
            model.beta.push(vals[0]);
            model.support.push(vals[1..].to_vec());
        }
        Ok(model)
    }
}

/// Training result with the dual solution.
#[derive(Debug, Clone)]
pub struct SvrFit {
    pub model: SvrModel,
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Error)]
pub enum SvrError {
    #[error("no training samples")]
    Empty,
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("sample {0} has a different input dimension")]
    Dimension(usize),
    #[error("no convergence within {iterations} iterations (KKT residual {residual})", iterations = .0.iterations, residual = .0.kkt_residual)]
    NotConverged(Box<SvrFit>),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
