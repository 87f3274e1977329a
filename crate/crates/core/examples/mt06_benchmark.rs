//! Learns the bundled mt06 instance with decomposed actions and a rollout
//! warm start, printing the greedy makespan at a few checkpoints.
//!
//! cargo run --release --example mt06_benchmark -- [episodes] [seeds]

use std::error::Error;

use rapql::bench::experiment::{benchmark_runs, checkpoint_stats, load_instance};
use rapql::bench::ExperimentConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(Ok(5000), |s| s.parse())?;
    let seeds: usize = args.next().map_or(Ok(3), |s| s.parse())?;

    let loaded = load_instance("sdata/mt06")?;
    let optimum = loaded.optimum.ok_or("no reference optimum")?;
    println!(
        "{}: {} jobs, {} machines, optimum {optimum}",
        loaded.name,
        loaded.fjs.num_jobs(),
        loaded.fjs.num_machines
    );

    let cfg = ExperimentConfig { episodes, seeds, decompose: true, rollout_warmup: 50, eval_runs: 1, ..Default::default() };
    let marks: Vec<usize> = [episodes / 10, episodes / 2, episodes].into_iter().filter(|&m| m > 0).collect();
    let runs = benchmark_runs(&cfg, &loaded.instance, &marks)?;
    for run in &runs {
        let costs: Vec<String> = run.report.checkpoints.iter().map(|c| format!("{}@{}", c.greedy_cost, c.episode)).collect();
        println!("seed {:>2}: {}  ({:.1}s)", run.seed, costs.join("  "), run.report.elapsed.as_secs_f64());
    }
    for (episode, s) in checkpoint_stats(&runs, optimum) {
        println!("after {episode:>6} episodes: mean error {:.2}% (sd {:.2})", s.relative, s.std_dev);
    }
    Ok(())
}
