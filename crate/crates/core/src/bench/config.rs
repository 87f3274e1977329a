//! Experiment configuration in `key = value` text form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::parallel::ParallelMode;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("unknown protocol {0:?} (benchmark, generator, clustering, speedup, disturbance)")]
    UnknownProtocol(String),
    #[error("{0}")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Benchmark,
    Generator,
    Clustering,
    Speedup,
    Disturbance,
}

impl FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "benchmark" | "bench" => Protocol::Benchmark,
            "generator" | "generate" => Protocol::Generator,
            "clustering" | "cluster-sweep" => Protocol::Clustering,
            "speedup" => Protocol::Speedup,
            "disturbance" | "disturb" => Protocol::Disturbance,
            other => return Err(ConfigError::UnknownProtocol(other.into())),
        })
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Benchmark => "benchmark",
            Protocol::Generator => "generator",
            Protocol::Clustering => "clustering",
            Protocol::Speedup => "speedup",
            Protocol::Disturbance => "disturbance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    Hash,
    Svr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureChoice {
    Makespan,
    LateJobs,
    TotalLateness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// `.fjs` path or bundled `dataset/name`.
    pub instance: String,
    /// Reference optimum overriding the bounds table.
    pub optimum: Option<f64>,
    pub seed: u64,
    pub seeds: usize,
    pub episodes: usize,
    pub checkpoints: Vec<usize>,
    pub store: StoreKind,
    pub decompose: bool,
    pub rollout_warmup: usize,
    /// `none` selects the size-based discount.
    pub discount: Option<f64>,
    pub tau0: Option<f64>,
    pub decay: Option<f64>,
    /// Deterministic exploration: unseen actions valued at best seen plus this many cost scales.
    pub unseen_margin: Option<f64>,
    pub eval_runs: usize,
    pub workers: usize,
    pub mode: ParallelMode,
    /// Target error in percent for time-to-threshold measurements.
    pub threshold: f64,
    pub measure: MeasureChoice,
    pub clusters: Vec<usize>,
    pub machines: usize,
    pub jobs: usize,
    pub tasks_per_job: (usize, usize),
    pub alternatives: (usize, usize),
    pub slack: Vec<f64>,
    pub setup_types: Option<usize>,
    pub cooling: f64,
    pub preemption: Option<u32>,
    pub instances: usize,
    /// `breakdown:R`, `new-resource:R`, `cancel:J` or `new-job:S/D,S/D;…`.
    pub event: String,
    pub trigger: usize,
    pub trials: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Benchmark,
            instance: "sdata/mt06".into(),
            optimum: None,
            seed: 0,
            seeds: 1,
            episodes: 1000,
            checkpoints: vec![1000, 5000, 10_000],
            store: StoreKind::Hash,
            decompose: false,
            rollout_warmup: 50,
            discount: Some(1.0),
            tau0: None,
            unseen_margin: Some(0.02),
            decay: None,
            eval_runs: 30,
            workers: 1,
            mode: ParallelMode::Shared,
            threshold: 5.0,
            measure: MeasureChoice::Makespan,
            clusters: vec![1, 5, 10, 20, 30, 40, 50],
            machines: 16,
            jobs: 100,
            tasks_per_job: (1, 3),
            alternatives: (1, 2),
            slack: vec![0.1],
            setup_types: None,
            cooling: 0.0,
            preemption: None,
            instances: 1,
            event: "breakdown:0".into(),
            trigger: 100,
            trials: 20,
            out: PathBuf::from("results"),
        }
    }
}

fn value_err(key: &str, value: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), msg: msg.into() }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| value_err(key, v, e.to_string()))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn range(key: &str, v: &str) -> Result<(usize, usize), ConfigError> {
    match v.split_once("..") {
        Some((a, b)) => Ok((num(key, a.trim())?, num(key, b.trim().trim_start_matches('='))?)),
        None => {
            let n = num(key, v)?;
            Ok((n, n))
        }
    }
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(value_err(key, v, "expected true or false")),
    }
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if v == "none" || v.is_empty() {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            config.set(k.trim(), v.trim())?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "protocol" => self.protocol = v.parse()?,
            "instance" => self.instance = v.into(),
            "optimum" => self.optimum = optional(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "seeds" => self.seeds = num(key, v)?,
            "episodes" => self.episodes = num(key, v)?,
            "checkpoints" => self.checkpoints = list(key, v)?,
            "store" => {
                self.store = match v {
                    "hash" => StoreKind::Hash,
                    "svr" => StoreKind::Svr,
                    _ => return Err(value_err(key, v, "expected hash or svr")),
                }
            }
            "decompose" => self.decompose = boolean(key, v)?,
            "rollout_warmup" => self.rollout_warmup = num(key, v)?,
            "discount" => self.discount = optional(key, v)?,
            "tau0" => self.tau0 = optional(key, v)?,
            "unseen_margin" => self.unseen_margin = optional(key, v)?,
            "decay" => self.decay = optional(key, v)?,
            "eval_runs" => self.eval_runs = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "mode" => {
                self.mode = match v {
                    "shared" => ParallelMode::Shared,
                    "distributed" => ParallelMode::Distributed,
                    _ => return Err(value_err(key, v, "expected shared or distributed")),
                }
            }
            "threshold" => self.threshold = num(key, v)?,
            "measure" => {
                self.measure = match v {
                    "makespan" => MeasureChoice::Makespan,
                    "late-jobs" => MeasureChoice::LateJobs,
                    "total-lateness" => MeasureChoice::TotalLateness,
                    _ => return Err(value_err(key, v, "expected makespan, late-jobs or total-lateness")),
                }
            }
            "clusters" => self.clusters = list(key, v)?,
            "machines" => self.machines = num(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "tasks_per_job" => self.tasks_per_job = range(key, v)?,
            "alternatives" => self.alternatives = range(key, v)?,
            "slack" => self.slack = list(key, v)?,
            "setup_types" => self.setup_types = optional(key, v)?,
            "cooling" => self.cooling = num(key, v)?,
            "preemption" => self.preemption = optional(key, v)?,
            "instances" => self.instances = num(key, v)?,
            "event" => self.event = v.into(),
            "trigger" => self.trigger = num(key, v)?,
            "trials" => self.trials = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// `key=value` lines reproducing this configuration.
    pub fn echo(&self) -> String {
        let opt = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        let join = |v: &[String]| v.join(",");
        let lines = [
            ("protocol", self.protocol.to_string()),
            ("instance", self.instance.clone()),
            ("optimum", opt(self.optimum.map(|x| x.to_string()))),
            ("seed", self.seed.to_string()),
            ("seeds", self.seeds.to_string()),
            ("episodes", self.episodes.to_string()),
            ("checkpoints", join(&self.checkpoints.iter().map(|c| c.to_string()).collect::<Vec<_>>())),
            ("store", if self.store == StoreKind::Hash { "hash" } else { "svr" }.into()),
            ("decompose", self.decompose.to_string()),
            ("rollout_warmup", self.rollout_warmup.to_string()),
            ("discount", opt(self.discount.map(|x| x.to_string()))),
            ("tau0", opt(self.tau0.map(|x| x.to_string()))),
            ("unseen_margin", opt(self.unseen_margin.map(|x| x.to_string()))),
            ("decay", opt(self.decay.map(|x| x.to_string()))),
            ("eval_runs", self.eval_runs.to_string()),
            ("workers", self.workers.to_string()),
            ("mode", if self.mode == ParallelMode::Shared { "shared" } else { "distributed" }.into()),
            ("threshold", self.threshold.to_string()),
            (
                "measure",
                match self.measure {
                    MeasureChoice::Makespan => "makespan",
                    MeasureChoice::LateJobs => "late-jobs",
                    MeasureChoice::TotalLateness => "total-lateness",
                }
                .into(),
            ),
            ("clusters", join(&self.clusters.iter().map(|c| c.to_string()).collect::<Vec<_>>())),
            ("machines", self.machines.to_string()),
            ("jobs", self.jobs.to_string()),
            ("tasks_per_job", format!("{}..{}", self.tasks_per_job.0, self.tasks_per_job.1)),
            ("alternatives", format!("{}..{}", self.alternatives.0, self.alternatives.1)),
            ("slack", join(&self.slack.iter().map(|c| c.to_string()).collect::<Vec<_>>())),
            ("setup_types", opt(self.setup_types.map(|x| x.to_string()))),
            ("cooling", self.cooling.to_string()),
            ("preemption", opt(self.preemption.map(|x| x.to_string()))),
            ("instances", self.instances.to_string()),
            ("event", self.event.clone()),
            ("trigger", self.trigger.to_string()),
            ("trials", self.trials.to_string()),
            ("out", self.out.display().to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_echo_round_trip() {
        let text = "protocol = clustering\n# comment\nclusters = 1, 10\ntasks_per_job = 2..4\nstore=svr\ndecompose = yes\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.protocol, Protocol::Clustering);
        assert_eq!(c.clusters, vec![1, 10]);
        assert_eq!(c.tasks_per_job, (2, 4));
        assert_eq!(c.store, StoreKind::Svr);
        assert!(c.decompose);
        assert_eq!(ExperimentConfig::parse(&c.echo()).unwrap(), c);
    }

    #[test]
    fn errors() {
        assert_eq!(ExperimentConfig::parse("nonsense\n"), Err(ConfigError::Syntax { line: 1 }));
        assert_eq!(ExperimentConfig::parse("colour = red\n"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(matches!(ExperimentConfig::parse("protocol = dance\n"), Err(ConfigError::UnknownProtocol(_))));
        assert!(matches!(ExperimentConfig::parse("episodes = many\n"), Err(ConfigError::Value { .. })));
    }
}
