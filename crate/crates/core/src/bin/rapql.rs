use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rapql::bench::{
    parse_fjs, run_experiment, ConfigError, ExperimentConfig, ExperimentError, MeasureChoice, Protocol, StoreKind,
};
use rapql::parallel::ParallelMode;
use rapql::rap::{encode_jsp, validate_instance};

#[derive(Parser)]
#[command(name = "rapql", version, about = "Fitted Q-learning for stochastic resource allocation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true, value_enum)]
    store: Option<StoreArg>,
    /// Split assignments into task and resource decisions.
    #[arg(long, global = true)]
    decompose: bool,
    #[arg(long, global = true, value_name = "N")]
    rollout_warmup: Option<usize>,
    #[arg(long, global = true, value_name = "K")]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// key = value experiment file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StoreArg {
    Hash,
    Svr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Shared,
    Distributed,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Makespan,
    LateJobs,
    TotalLateness,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a benchmark instance over several seeds.
    Bench {
        /// `.fjs` path or bundled dataset/name, such as sdata/mt06.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        optimum: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
    },
    /// Generate instances with known optimum and target slack ratio.
    Generate {
        #[command(flatten)]
        plant: PlantArgs,
        #[arg(long, value_delimiter = ',')]
        slack: Option<Vec<f64>>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Train a generated instance cluster by cluster.
    ClusterSweep {
        #[command(flatten)]
        plant: PlantArgs,
        #[arg(long, value_delimiter = ',')]
        clusters: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        measure: Option<MeasureArg>,
    },
    /// Time to an error threshold with one and with K workers.
    Speedup {
        #[arg(long)]
        instance: Option<String>,
        /// Error threshold in percent.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Paired continue/restart runs around a disturbance.
    Disturb {
        /// `.fjs` path, bundled dataset/name, or `generated`.
        #[arg(long)]
        instance: Option<String>,
        /// breakdown:R, new-resource:R, cancel:J or new-job:S/D|S/D,S/D
        #[arg(long)]
        event: Option<String>,
        #[arg(long)]
        trigger: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        plant: PlantArgs,
    },
    /// Parse and check instance files (and the config file, if given).
    Validate { files: Vec<PathBuf> },
}

#[derive(Args)]
struct PlantArgs {
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn apply(cfg: &mut ExperimentConfig, g: &Global) {
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(e) = g.episodes {
        cfg.episodes = e;
    }
    if let Some(s) = g.store {
        cfg.store = match s {
            StoreArg::Hash => StoreKind::Hash,
            StoreArg::Svr => StoreKind::Svr,
        };
    }
    if g.decompose {
        cfg.decompose = true;
    }
    if let Some(w) = g.rollout_warmup {
        cfg.rollout_warmup = w;
    }
    if let Some(k) = g.workers {
        cfg.workers = k;
    }
    if let Some(m) = g.mode {
        cfg.mode = match m {
            ModeArg::Shared => ParallelMode::Shared,
            ModeArg::Distributed => ParallelMode::Distributed,
        };
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
}

fn apply_plant(cfg: &mut ExperimentConfig, p: &PlantArgs) {
    if let Some(m) = p.machines {
        cfg.machines = m;
    }
    if let Some(j) = p.jobs {
        cfg.jobs = j;
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<Option<ExperimentConfig>, ExperimentError> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path)
        .map_err(|e| ExperimentError::Config(ConfigError::Missing(format!("{}: {e}", path.display()))))?;
    Ok(Some(ExperimentConfig::parse(&text)?))
}

fn validate(files: &[PathBuf], config: Option<&ExperimentConfig>) -> Result<(), ExperimentError> {
    if let Some(c) = config {
        println!("config: ok ({} protocol)", c.protocol);
    }
    let mut failed = false;
    for f in files {
        let text = fs::read_to_string(f)?;
        let fjs = parse_fjs(&text).map_err(|source| ExperimentError::Parse { path: f.display().to_string(), source })?;
        let enc = encode_jsp(&fjs.to_job_shop()).map_err(|e| ExperimentError::Runtime(e.to_string()))?;
        let report = validate_instance(&enc.instance);
        println!(
            "{}: {} jobs, {} machines, {} operations, flexibility {:.2}, {}",
            f.display(),
            fjs.num_jobs(),
            fjs.num_machines,
            fjs.num_operations(),
            fjs.flexibility(),
            if report.is_ok() { "ok".to_string() } else { format!("{} issue(s)", report.issues.len()) }
        );
        for issue in &report.issues {
            println!("  {issue}");
        }
        failed |= !report.is_ok();
    }
    if failed {
        return Err(ExperimentError::Runtime("instance validation failed".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    let file_cfg = load_config(cli.global.config.as_ref())?;
    let (protocol, plant) = match &cli.command {
        Command::Bench { .. } => (Protocol::Benchmark, None),
        Command::Generate { plant, .. } => (Protocol::Generator, Some(plant)),
        Command::ClusterSweep { plant, .. } => (Protocol::Clustering, Some(plant)),
        Command::Speedup { .. } => (Protocol::Speedup, None),
        Command::Disturb { plant, .. } => (Protocol::Disturbance, Some(plant)),
        Command::Validate { files } => return validate(files, file_cfg.as_ref()),
    };
    let mut cfg = file_cfg.unwrap_or_default();
    cfg.protocol = protocol;
    apply(&mut cfg, &cli.global);
    if let Some(p) = plant {
        apply_plant(&mut cfg, p);
    }
    match cli.command {
        Command::Bench { instance, seeds, optimum, checkpoints } => {
            cfg.instance = instance.unwrap_or(cfg.instance);
            cfg.seeds = seeds.unwrap_or(cfg.seeds);
            cfg.optimum = optimum.or(cfg.optimum);
            cfg.checkpoints = checkpoints.unwrap_or(cfg.checkpoints);
        }
        Command::Generate { slack, instances, .. } => {
            cfg.slack = slack.unwrap_or(cfg.slack);
            cfg.instances = instances.unwrap_or(cfg.instances);
        }
        Command::ClusterSweep { clusters, measure, .. } => {
            cfg.clusters = clusters.unwrap_or(cfg.clusters);
            if let Some(m) = measure {
                cfg.measure = match m {
                    MeasureArg::Makespan => MeasureChoice::Makespan,
                    MeasureArg::LateJobs => MeasureChoice::LateJobs,
                    MeasureArg::TotalLateness => MeasureChoice::TotalLateness,
                };
            }
        }
        Command::Speedup { instance, threshold, seeds } => {
            cfg.instance = instance.unwrap_or(cfg.instance);
            cfg.threshold = threshold.unwrap_or(cfg.threshold);
            cfg.seeds = seeds.unwrap_or(cfg.seeds);
        }
        Command::Disturb { instance, event, trigger, trials, .. } => {
            cfg.instance = instance.unwrap_or(cfg.instance);
            cfg.event = event.unwrap_or(cfg.event);
            cfg.trigger = trigger.unwrap_or(cfg.trigger);
            cfg.trials = trials.unwrap_or(cfg.trials);
        }
        Command::Validate { .. } => unreachable!("handled above"),
    }
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.table);
    for e in &outcome.events {
        eprintln!("event: {e}");
    }
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
