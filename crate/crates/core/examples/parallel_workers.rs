//! Shared-store and distributed sampling on mt06.

use std::error::Error;

use rapql::bench::experiment::{load_instance, parallel_run};
use rapql::bench::ExperimentConfig;
use rapql::parallel::ParallelMode;

fn main() -> Result<(), Box<dyn Error>> {
    let workers: usize = std::env::args().nth(1).map_or(Ok(4), |s| s.parse())?;
    let loaded = load_instance("sdata/mt06")?;
    let optimum = loaded.optimum.ok_or("no reference optimum")?;
    let cfg = ExperimentConfig { episodes: 20_000, threshold: 5.0, eval_runs: 1, ..Default::default() };
    for mode in [ParallelMode::Shared, ParallelMode::Distributed] {
        for k in [1, workers] {
            let r = parallel_run(&cfg, &loaded.instance, optimum, k, mode, 7)?;
            let t = r.to_threshold.map_or("not reached".into(), |d| format!("{:.3}s", d.as_secs_f64()));
            println!("{mode:?} k={k}: {} episodes, error {:.2}%, 5% threshold {t}", r.episodes, r.final_error);
        }
    }
    Ok(())
}
