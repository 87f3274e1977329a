//! Experiment protocols and their CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, MeasureChoice, Protocol, StoreKind};
use super::disturb::{
    run_with_disturbance, AfterEvent, DisturbError, DisturbanceEvent, DisturbanceKind, DisturbanceSetup, NewJob, Plant,
};
use super::generator::{generate_instance, GenerateError, GeneratedInstance, GeneratorSpec};
use super::metrics::{error_stats, relative_error, ErrorStats};
use super::{bundled_instance_path, parse_fjs, BoundsTable, FjsError, FjsInstance};
use crate::cluster::{
    build_clusters, evaluate_composite, horizon_slacks, sequential_train, target_size_for, window_slacks, ClusterError,
};
use crate::env::{Env, EnvConfig, EnvError};
use crate::features::{FeatureMode, FeatureSchema};
use crate::learner::{Learner, LearnerConfig, LearnerError, StopRule, TemperatureSchedule, TrainOptions, TrainReport};
use crate::parallel::{run_distributed, run_shared, ParallelConfig, ParallelError, ParallelMode};
use crate::rap::{encode_jsp, EncodeError, JobTable, PerformanceMeasure, RapInstance, ResourceId, StateId};
use crate::store::{AnyStore, HashQTable, SharedHashQTable, SvrStore, SvrStoreConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Parse { path: String, source: FjsError },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
}

impl ExperimentError {
    /// Process exit code: 2 configuration, 3 input parsing, 4 runtime, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Parse { .. } => 3,
            ExperimentError::Runtime(_) => 4,
            ExperimentError::Io(_) => 5,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ExperimentError {
            fn from(e: $t) -> Self {
                ExperimentError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(LearnerError, ClusterError, ParallelError, GenerateError, DisturbError, EnvError, EncodeError);

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

/// A parsed benchmark instance with its reference optimum.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub dataset: String,
    pub name: String,
    pub fjs: FjsInstance,
    pub instance: Arc<RapInstance>,
    pub jobs: Vec<Vec<crate::rap::OpId>>,
    pub optimum: Option<f64>,
}

/// Loads a `.fjs` file given as a path or as bundled `dataset/name`.
pub fn load_instance(spec: &str) -> Result<LoadedInstance, ExperimentError> {
    let direct = PathBuf::from(spec);
    let path = if direct.is_file() {
        direct
    } else if let Some((d, n)) = spec.split_once('/').filter(|_| !spec.ends_with(".fjs")) {
        bundled_instance_path(d, n)
    } else {
        direct
    };
    if !path.is_file() {
        return Err(ConfigError::Missing(format!("instance {spec:?} not found")).into());
    }
    let text = fs::read_to_string(&path)?;
    let fjs = parse_fjs(&text).map_err(|source| ExperimentError::Parse { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dataset = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let optimum = BoundsTable::bundled().get(&dataset, &name).ok().map(|b| b.reference());
    let enc = encode_jsp(&fjs.to_job_shop())?;
    Ok(LoadedInstance { dataset, name, fjs, instance: Arc::new(enc.instance), jobs: enc.jobs, optimum })
}

/// Learner settings derived from the experiment configuration.
pub fn learner_config(cfg: &ExperimentConfig, num_tasks: usize, seed: u64) -> LearnerConfig {
    let base = TemperatureSchedule::default();
    LearnerConfig {
        discount: cfg.discount.unwrap_or_else(|| LearnerConfig::discount_for(num_tasks)),
        temperature: TemperatureSchedule {
            tau0: cfg.tau0.unwrap_or(base.tau0),
            decay: cfg.decay.unwrap_or(base.decay),
            ..base
        },
        episodes: cfg.episodes,
        warmup: cfg.rollout_warmup,
        unseen_margin: cfg.unseen_margin,
        seed,
        ..LearnerConfig::default()
    }
}

pub fn make_store(kind: StoreKind, schema: &FeatureSchema) -> AnyStore {
    match kind {
        StoreKind::Hash => AnyStore::Hash(HashQTable::with_default_budget(schema.radices().to_vec())),
        StoreKind::Svr => AnyStore::Svr(Box::new(SvrStore::new(schema.bounds(), SvrStoreConfig::default()))),
    }
}

fn env_config(cfg: &ExperimentConfig) -> EnvConfig {
    EnvConfig { decompose: cfg.decompose, ..EnvConfig::default() }
}

fn measure_for(choice: MeasureChoice, jobs: &Arc<JobTable>) -> PerformanceMeasure {
    match choice {
        MeasureChoice::Makespan => PerformanceMeasure::makespan(),
        MeasureChoice::LateJobs => PerformanceMeasure::late_jobs(jobs.clone()),
        MeasureChoice::TotalLateness => PerformanceMeasure::total_lateness(jobs.clone()),
    }
}

pub fn generator_spec(cfg: &ExperimentConfig, slack: f64, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        machines: cfg.machines,
        jobs: cfg.jobs,
        tasks_per_job: cfg.tasks_per_job,
        alternatives: cfg.alternatives,
        slack,
        setup_types: cfg.setup_types,
        cooling: cfg.cooling,
        preemption_period: cfg.preemption,
        seed,
        ..GeneratorSpec::default()
    }
}

/// Reference optimum of a generated instance under a measure.
pub fn generated_optimum(g: &GeneratedInstance, measure: MeasureChoice) -> f64 {
    match measure {
        MeasureChoice::Makespan => g.reference_makespan as f64,
        MeasureChoice::LateJobs | MeasureChoice::TotalLateness => g.optimum,
    }
}

struct Csv {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, ExperimentError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), ExperimentError> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf, ExperimentError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// What a protocol produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub protocol: Protocol,
    /// Human-readable summary table.
    pub table: String,
    pub files: Vec<PathBuf>,
    pub events: Vec<String>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let outcome = match cfg.protocol {
        Protocol::Benchmark => benchmark_protocol(cfg)?,
        Protocol::Generator => generator_protocol(cfg)?,
        Protocol::Clustering => clustering_protocol(cfg)?,
        Protocol::Speedup => speedup_protocol(cfg)?,
        Protocol::Disturbance => disturbance_protocol(cfg)?,
    };
    fs::write(cfg.out.join(format!("{}_config.txt", cfg.protocol)), cfg.echo())?;
    Ok(outcome)
}

/// One training run of the benchmark protocol.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: TrainReport,
}

/// Trains one learner per seed on a benchmark instance.
pub fn benchmark_runs(
    cfg: &ExperimentConfig,
    instance: &Arc<RapInstance>,
    checkpoints: &[usize],
) -> Result<Vec<SeedRun>, ExperimentError> {
    let env = Env::new(instance.clone(), PerformanceMeasure::makespan(), env_config(cfg))?;
    let schema = FeatureSchema::new(instance.clone(), FeatureMode::Packed);
    let options = TrainOptions { checkpoints: checkpoints.to_vec(), stop: None, eval_runs: cfg.eval_runs };
    (0..cfg.seeds as u64)
        .map(|s| {
            let seed = cfg.seed + s;
            let mut learner = Learner::new(env.clone(), schema.clone(), learner_config(cfg, instance.num_tasks(), seed))?;
            let mut store = make_store(cfg.store, &schema);
            Ok(SeedRun { seed, report: learner.train(&mut store, &options)? })
        })
        .collect()
}

/// Error statistics of the greedy costs at each checkpoint.
pub fn checkpoint_stats(runs: &[SeedRun], optimum: f64) -> Vec<(usize, ErrorStats)> {
    let Some(first) = runs.first() else { return Vec::new() };
    first
        .report
        .checkpoints
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let costs: Vec<f64> = runs.iter().filter_map(|r| r.report.checkpoints.get(i).map(|c| c.greedy_cost)).collect();
            error_stats(&costs, optimum).ok().map(|s| (c.episode, s))
        })
        .collect()
}

fn benchmark_protocol(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let loaded = load_instance(&cfg.instance)?;
    let optimum = cfg.optimum.or(loaded.optimum).ok_or_else(|| {
        ConfigError::Missing(format!("no reference optimum for {}; set optimum = <value>", cfg.instance))
    })?;
    let mut checkpoints: Vec<usize> = cfg.checkpoints.iter().copied().filter(|&c| c <= cfg.episodes).collect();
    if checkpoints.last() != Some(&cfg.episodes) {
        checkpoints.push(cfg.episodes);
    }
    let runs = benchmark_runs(cfg, &loaded.instance, &checkpoints)?;

    let mut episodes = Csv::create(&cfg.out, "benchmark_episodes.csv", &["seed", "episode", "cost", "error_pct", "wall_secs"])?;
    let mut header = vec!["seed".to_string()];
    for c in &checkpoints {
        header.push(format!("greedy_{c}"));
        header.push(format!("error_pct_{c}"));
    }
    header.push("train_secs".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut seeds = Csv::create(&cfg.out, "benchmark_seeds.csv", &header_refs)?;
    for run in &runs {
        for rec in &run.report.curve {
            episodes.row(&[
                run.seed.to_string(),
                rec.episode.to_string(),
                rec.cost.to_string(),
                relative_error(rec.cost, optimum).to_string(),
                rec.wall_secs.to_string(),
            ])?;
        }
        let mut row = vec![run.seed.to_string()];
        for c in &run.report.checkpoints {
            row.push(c.greedy_cost.to_string());
            row.push(relative_error(c.greedy_cost, optimum).to_string());
        }
        row.push(run.report.elapsed.as_secs_f64().to_string());
        seeds.row(&row)?;
    }
    let stats = checkpoint_stats(&runs, optimum);
    let mut agg = Csv::create(&cfg.out, "benchmark_checkpoints.csv", &["episode", "mean_error", "std_error", "relative_pct", "samples"])?;
    let mut table = format!("{}/{} (J* = {optimum}), {} seed(s)\n", loaded.dataset, loaded.name, runs.len());
    let _ = writeln!(table, "{:>10} {:>12} {:>12} {:>10}", "episodes", "mean error", "std dev", "error %");
    for (ep, s) in &stats {
        agg.row(&[ep.to_string(), s.mean.to_string(), s.std_dev.to_string(), s.relative.to_string(), s.samples.to_string()])?;
        let _ = writeln!(table, "{ep:>10} {:>12.3} {:>12.3} {:>9.2}%", s.mean, s.std_dev, s.relative);
    }
    Ok(ExperimentOutcome {
        protocol: Protocol::Benchmark,
        table,
        files: vec![episodes.finish()?, seeds.finish()?, agg.finish()?],
        events: Vec::new(),
    })
}

fn generator_protocol(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let mut rows = Csv::create(
        &cfg.out,
        "generator_instances.csv",
        &["slack_target", "seed", "achieved_slack", "jobs", "tasks", "resources", "reference_makespan", "late_jobs", "feasible"],
    )?;
    let mut refs = Csv::create(&cfg.out, "generator_reference.csv", &["slack_target", "seed", "resource", "start", "op", "duration"])?;
    let mut table = String::new();
    let _ = writeln!(table, "{:>8} {:>6} {:>9} {:>6} {:>9} {:>5}", "target", "seed", "achieved", "tasks", "makespan", "late");
    for &slack in &cfg.slack {
        for i in 0..cfg.instances as u64 {
            let seed = cfg.seed + i;
            let g = generate_instance(&generator_spec(cfg, slack, seed))?;
            let feasible = crate::rap::check_feasibility(&g.instance, &g.reference).map(|f| f.is_feasible()).unwrap_or(false);
            let late = crate::rap::evaluate_measure(&PerformanceMeasure::late_jobs(g.jobs.clone()), &g.instance, &g.reference)
                .map_err(|e| ExperimentError::Runtime(e.to_string()))?;
            rows.row(&[
                slack.to_string(),
                seed.to_string(),
                g.achieved_slack.to_string(),
                g.jobs.num_jobs().to_string(),
                g.instance.num_tasks().to_string(),
                g.instance.num_resources().to_string(),
                g.reference_makespan.to_string(),
                late.to_string(),
                feasible.to_string(),
            ])?;
            for e in g.reference.entries() {
                refs.row(&[
                    slack.to_string(),
                    seed.to_string(),
                    e.resource.0.to_string(),
                    e.start.to_string(),
                    e.op.0.to_string(),
                    e.duration.to_string(),
                ])?;
            }
            let _ = writeln!(
                table,
                "{slack:>8.2} {seed:>6} {:>9.4} {:>6} {:>9} {late:>5}",
                g.achieved_slack,
                g.instance.num_tasks(),
                g.reference_makespan
            );
        }
    }
    Ok(ExperimentOutcome { protocol: Protocol::Generator, table, files: vec![rows.finish()?, refs.finish()?], events: Vec::new() })
}

/// Result of training one cluster count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSweepRow {
    pub clusters: usize,
    pub target_size: usize,
    pub secs: f64,
    pub cost: f64,
    pub error: f64,
    pub fallbacks: u64,
}

/// Sequential cluster training of a generated instance for each cluster
/// count; each cluster gets `cfg.episodes` episodes. Under the late-jobs
/// measure the error is the percentage of late jobs.
pub fn cluster_sweep(
    cfg: &ExperimentConfig,
    generated: &GeneratedInstance,
    counts: &[usize],
) -> Result<Vec<ClusterSweepRow>, ExperimentError> {
    let inst = Arc::new(generated.instance.clone());
    let env = Env::new(inst.clone(), measure_for(cfg.measure, &generated.jobs), env_config(cfg))?;
    let optimum = generated_optimum(generated, cfg.measure);
    let slacks = match cfg.measure {
        MeasureChoice::Makespan => horizon_slacks(&inst),
        _ => window_slacks(&inst, |t| generated.jobs.window(t))?,
    };
    let n = inst.num_tasks();
    let mut rows = Vec::new();
    for &k in counts.iter().filter(|&&k| k >= 1 && k <= n) {
        let plan = build_clusters(&inst, &slacks, target_size_for(n, k))?;
        let lc = learner_config(cfg, n, cfg.seed);
        let options = TrainOptions { eval_runs: cfg.eval_runs, ..TrainOptions::default() };
        let run = sequential_train(&plan, &env, FeatureMode::Packed, &lc, &options, |s| make_store(StoreKind::Hash, s))?;
        let cost = evaluate_composite(&env, &run.policy, cfg.eval_runs, cfg.seed);
        rows.push(ClusterSweepRow {
            clusters: plan.len(),
            target_size: plan.target_size,
            secs: run.elapsed.as_secs_f64(),
            cost,
            error: match cfg.measure {
                MeasureChoice::LateJobs => 100.0 * cost / generated.jobs.num_jobs().max(1) as f64,
                _ => relative_error(cost, optimum),
            },
            fallbacks: run.fallbacks(),
        });
    }
    Ok(rows)
}

fn clustering_protocol(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let g = generate_instance(&generator_spec(cfg, cfg.slack.first().copied().unwrap_or(0.1), cfg.seed))?;
    let rows = cluster_sweep(cfg, &g, &cfg.clusters)?;
    let mut csv = Csv::create(&cfg.out, "clustering.csv", &["clusters", "target_size", "train_secs", "cost", "error", "speedup", "fallbacks"])?;
    let base = rows.first().map(|r| r.secs).unwrap_or(1.0);
    let mut table = format!("{} tasks, optimum reference {}\n", g.instance.num_tasks(), generated_optimum(&g, cfg.measure));
    let _ = writeln!(table, "{:>8} {:>6} {:>10} {:>10} {:>9} {:>8}", "clusters", "size", "secs", "cost", "error", "speedup");
    for r in &rows {
        let speedup = base / r.secs;
        csv.row(&[
            r.clusters.to_string(),
            r.target_size.to_string(),
            r.secs.to_string(),
            r.cost.to_string(),
            r.error.to_string(),
            speedup.to_string(),
            r.fallbacks.to_string(),
        ])?;
        let _ = writeln!(
            table,
            "{:>8} {:>6} {:>10.2} {:>10.2} {:>9.2} {:>7.2}x",
            r.clusters, r.target_size, r.secs, r.cost, r.error, speedup
        );
    }
    Ok(ExperimentOutcome { protocol: Protocol::Clustering, table, files: vec![csv.finish()?], events: Vec::new() })
}

/// One parallel run measured by the speedup protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub workers: usize,
    pub mode: ParallelMode,
    pub seed: u64,
    /// Wall clock to the error threshold, when reached.
    pub to_threshold: Option<Duration>,
    pub episodes: usize,
    pub final_error: f64,
}

/// Runs `workers` workers in `mode` once; shared mode stops at the error
/// threshold (percent) or after `cfg.episodes` episodes in total.
pub fn parallel_run(
    cfg: &ExperimentConfig,
    instance: &Arc<RapInstance>,
    optimum: f64,
    workers: usize,
    mode: ParallelMode,
    seed: u64,
) -> Result<SpeedupRow, ExperimentError> {
    let env = Env::new(instance.clone(), PerformanceMeasure::makespan(), env_config(cfg))?;
    let schema = FeatureSchema::new(instance.clone(), FeatureMode::Packed);
    let lc = learner_config(cfg, instance.num_tasks(), seed);
    let pc = ParallelConfig::new(mode, workers, seed, cfg.episodes);
    match mode {
        ParallelMode::Shared => {
            let store = SharedHashQTable::with_default_budget(schema.radices().to_vec());
            let stop = StopRule { reference: optimum, threshold: cfg.threshold / 100.0, every: 10 };
            let run = run_shared(&pc, &env, &schema, &lc, &store, Some(stop))?;
            Ok(SpeedupRow {
                workers,
                mode,
                seed,
                to_threshold: run.reached.map(|r| r.0),
                episodes: run.episodes,
                final_error: relative_error(run.greedy_cost, optimum),
            })
        }
        ParallelMode::Distributed => {
            let run = run_distributed(&pc, &env, &schema, &lc, |s| HashQTable::with_default_budget(s.radices().to_vec()))?;
            let err = relative_error(run.selected_cost(), optimum);
            Ok(SpeedupRow {
                workers,
                mode,
                seed,
                to_threshold: (err <= cfg.threshold).then_some(run.elapsed),
                episodes: run.workers.iter().map(|w| w.episodes).sum(),
                final_error: err,
            })
        }
    }
}

fn speedup_protocol(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let loaded = load_instance(&cfg.instance)?;
    let optimum = cfg
        .optimum
        .or(loaded.optimum)
        .ok_or_else(|| ConfigError::Missing(format!("no reference optimum for {}", cfg.instance)))?;
    let mut counts = vec![1];
    if cfg.workers > 1 {
        counts.push(cfg.workers);
    }
    let mut csv = Csv::create(&cfg.out, "speedup.csv", &["k", "mode", "seed", "wall_to_threshold", "episodes", "final_error"])?;
    let mode_name = if cfg.mode == ParallelMode::Shared { "shared" } else { "distributed" };
    let mut table = String::new();
    let _ = writeln!(table, "{:>3} {:>12} {:>6} {:>12} {:>9} {:>8}", "k", "mode", "seed", "to thresh", "episodes", "error");
    for &k in &counts {
        for s in 0..cfg.seeds as u64 {
            let r = parallel_run(cfg, &loaded.instance, optimum, k, cfg.mode, cfg.seed + 1000 * s)?;
            let t = r.to_threshold.map_or("none".to_string(), |d| d.as_secs_f64().to_string());
            csv.row(&[k.to_string(), mode_name.into(), r.seed.to_string(), t.clone(), r.episodes.to_string(), r.final_error.to_string()])?;
            let _ = writeln!(table, "{k:>3} {mode_name:>12} {:>6} {t:>12.12} {:>9} {:>7.2}%", r.seed, r.episodes, r.final_error);
        }
    }
    Ok(ExperimentOutcome { protocol: Protocol::Speedup, table, files: vec![csv.finish()?], events: Vec::new() })
}

/// Parses `breakdown:R`, `new-resource:R`, `cancel:J` or
/// `new-job:S/D|S/D,S/D` (operations separated by commas, alternatives by
/// `|`, states and durations as integers).
pub fn parse_event(text: &str) -> Result<DisturbanceKind, ConfigError> {
    let bad = |msg: &str| ConfigError::Value { key: "event".into(), value: text.into(), msg: msg.into() };
    let (kind, arg) = text.split_once(':').ok_or_else(|| bad("expected kind:argument"))?;
    let int = |s: &str| s.trim().parse::<u32>().map_err(|_| bad("expected an integer"));
    Ok(match kind.trim() {
        "breakdown" => DisturbanceKind::Breakdown(ResourceId(int(arg)?)),
        "new-resource" => DisturbanceKind::NewResource { template: ResourceId(int(arg)?) },
        "cancel" => DisturbanceKind::Cancellation { job: int(arg)? as usize },
        "new-job" => {
            let ops = arg
                .split(',')
                .map(|op| {
                    op.split('|')
                        .map(|alt| {
                            let (s, d) = alt.split_once('/').ok_or_else(|| bad("alternatives are state/duration"))?;
                            Ok((StateId(int(s)?), int(d)?))
                        })
                        .collect::<Result<Vec<_>, ConfigError>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            DisturbanceKind::NewJob(NewJob { ops, window: None })
        }
        _ => return Err(bad("unknown event kind")),
    })
}

/// Paired continue/restart arms of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceTrial {
    pub seed: u64,
    pub continue_costs: Vec<f64>,
    pub restart_costs: Vec<f64>,
    pub continue_greedy: Vec<f64>,
    pub restart_greedy: Vec<f64>,
    pub events: Vec<String>,
}

/// Plant for the disturbance protocol: a generated instance when
/// `instance = generated`, otherwise a benchmark file.
pub fn disturbance_plant(cfg: &ExperimentConfig) -> Result<(Plant, f64), ExperimentError> {
    if cfg.instance == "generated" {
        let g = generate_instance(&generator_spec(cfg, cfg.slack.first().copied().unwrap_or(0.1), cfg.seed))?;
        let optimum = generated_optimum(&g, cfg.measure);
        Ok((Plant { instance: Arc::new(g.instance), jobs: g.jobs }, optimum))
    } else {
        let l = load_instance(&cfg.instance)?;
        let optimum = cfg.optimum.or(l.optimum).unwrap_or(0.0);
        let table = JobTable::new(
            l.instance.num_ops(),
            l.jobs.clone(),
            vec![crate::rap::TaskWindow { release: 0, due: u32::MAX }; l.jobs.len()],
        );
        Ok((Plant { instance: l.instance, jobs: Arc::new(table) }, optimum))
    }
}

pub fn disturbance_trials(cfg: &ExperimentConfig, plant: &Plant) -> Result<Vec<DisturbanceTrial>, ExperimentError> {
    let kind = parse_event(&cfg.event)?;
    let measure = cfg.measure;
    let measure_fn = move |jobs: &Arc<JobTable>| measure_for(measure, jobs);
    (0..cfg.trials as u64)
        .map(|t| {
            let seed = cfg.seed + t;
            let lc = learner_config(cfg, plant.instance.num_tasks(), seed);
            let setup = DisturbanceSetup {
                plant,
                measure: &measure_fn,
                env: env_config(cfg),
                features: FeatureMode::Packed,
                learner: &lc,
                episodes: cfg.episodes,
                eval_runs: cfg.eval_runs,
            };
            let mut ev = DisturbanceEvent { trigger: cfg.trigger, kind: kind.clone(), mode: AfterEvent::Continue };
            let a = run_with_disturbance(&setup, &ev, |s| make_store(cfg.store, s))?;
            ev.mode = AfterEvent::Restart;
            let b = run_with_disturbance(&setup, &ev, |s| make_store(cfg.store, s))?;
            Ok(DisturbanceTrial {
                seed,
                continue_costs: a.costs,
                restart_costs: b.costs,
                continue_greedy: a.greedy,
                restart_greedy: b.greedy,
                events: a.events,
            })
        })
        .collect()
}

fn disturbance_protocol(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let (plant, optimum) = disturbance_plant(cfg)?;
    let trials = disturbance_trials(cfg, &plant)?;
    let mut files = Vec::new();
    let header = ["trial_seed", "episode", "cost", "greedy_cost", "greedy_error"];
    for (arm, name) in [(AfterEvent::Continue, "disturbance_continue.csv"), (AfterEvent::Restart, "disturbance_restart.csv")] {
        let mut csv = Csv::create(&cfg.out, name, &header)?;
        for t in &trials {
            let (costs, greedy) = match arm {
                AfterEvent::Continue => (&t.continue_costs, &t.continue_greedy),
                AfterEvent::Restart => (&t.restart_costs, &t.restart_greedy),
            };
            for (i, (&c, &g)) in costs.iter().zip(greedy).enumerate() {
                csv.row(&[
                    t.seed.to_string(),
                    i.to_string(),
                    c.to_string(),
                    g.to_string(),
                    relative_error(g, optimum).to_string(),
                ])?;
            }
        }
        files.push(csv.finish()?);
    }
    let from = cfg.trigger.min(cfg.episodes);
    let area = |c: &[f64]| c[from..].iter().map(|&g| relative_error(g, optimum)).sum::<f64>();
    let wins = trials.iter().filter(|t| area(&t.continue_greedy) < area(&t.restart_greedy)).count();
    let mut table = String::new();
    let _ = writeln!(table, "{:>6} {:>14} {:>14}", "seed", "area continue", "area restart");
    for t in &trials {
        let _ = writeln!(table, "{:>6} {:>14.2} {:>14.2}", t.seed, area(&t.continue_greedy), area(&t.restart_greedy));
    }
    let _ = writeln!(table, "continue lower in {wins}/{} trials", trials.len());
    let events = trials.first().map(|t| t.events.clone()).unwrap_or_default();
    Ok(ExperimentOutcome { protocol: Protocol::Disturbance, table, files, events })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_bundled_instance() {
        let l = load_instance("sdata/mt06").unwrap();
        assert_eq!((l.fjs.num_jobs(), l.fjs.num_machines, l.fjs.num_operations()), (6, 6, 36));
        assert_eq!(l.optimum, Some(55.0));
        assert_eq!(load_instance("nowhere/nothing").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn events_parse() {
        assert_eq!(parse_event("breakdown:3").unwrap(), DisturbanceKind::Breakdown(ResourceId(3)));
        assert_eq!(parse_event("cancel:1").unwrap(), DisturbanceKind::Cancellation { job: 1 });
        match parse_event("new-job:0/3|1/4,2/5").unwrap() {
            DisturbanceKind::NewJob(j) => assert_eq!(j.ops, vec![vec![(StateId(0), 3), (StateId(1), 4)], vec![(StateId(2), 5)]]),
            other => panic!("{other:?}"),
        }
        assert!(parse_event("flood:1").is_err());
    }

    #[test]
    fn csv_stats_match_memory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            episodes: 60,
            seeds: 3,
            checkpoints: vec![20, 60],
            rollout_warmup: 5,
            out: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.files.len(), 3);
        let mut rd = csv::Reader::from_path(dir.path().join("benchmark_seeds.csv")).unwrap();
        let costs: Vec<f64> = rd.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
        let recomputed = error_stats(&costs, 55.0).unwrap();
        let mut agg = csv::Reader::from_path(dir.path().join("benchmark_checkpoints.csv")).unwrap();
        let row = agg.records().nth(1).unwrap().unwrap();
        assert_eq!(row[1].parse::<f64>().unwrap(), recomputed.mean);
        assert_eq!(row[2].parse::<f64>().unwrap(), recomputed.std_dev);
    }
}
