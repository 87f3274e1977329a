//! Trains a generated plant cluster by cluster and compares training time and
//! late-job error across cluster counts.

use std::error::Error;

use rapql::bench::experiment::{cluster_sweep, generator_spec};
use rapql::bench::{generate_instance, ExperimentConfig, MeasureChoice};

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = ExperimentConfig {
        machines: 8,
        jobs: 40,
        slack: vec![0.2],
        measure: MeasureChoice::LateJobs,
        episodes: 200,
        ..Default::default()
    };
    let g = generate_instance(&generator_spec(&cfg, 0.2, cfg.seed))?;
    println!("{} tasks on {} machines", g.instance.num_tasks(), cfg.machines);
    let rows = cluster_sweep(&cfg, &g, &[1, 2, 5, 10])?;
    let base = rows[0].secs;
    for r in &rows {
        println!(
            "{:>3} clusters of {:>3}: {:>6.2}s ({:.2}x), {:>5.1}% late",
            r.clusters,
            r.target_size,
            r.secs,
            base / r.secs,
            r.error
        );
    }
    Ok(())
}
