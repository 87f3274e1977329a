//! A machine breaks down mid-training. One arm keeps learning with its store,
//! the other restarts from scratch.

use std::error::Error;

use rapql::bench::experiment::{disturbance_plant, disturbance_trials};
use rapql::bench::{relative_error, ExperimentConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = ExperimentConfig {
        instance: "generated".into(),
        machines: 4,
        jobs: 10,
        alternatives: (2, 2),
        episodes: 300,
        trials: 3,
        event: "breakdown:0".into(),
        trigger: 100,
        eval_runs: 1,
        ..Default::default()
    };
    let (plant, optimum) = disturbance_plant(&cfg)?;
    for t in disturbance_trials(&cfg, &plant)? {
        for e in &t.events {
            println!("seed {}: {e}", t.seed);
        }
        for episode in [99, 100, 150, 200, 299] {
            println!(
                "  episode {:>3}: continue {:>5.1}%  restart {:>5.1}%",
                episode + 1,
                relative_error(t.continue_greedy[episode], optimum),
                relative_error(t.restart_greedy[episode], optimum)
            );
        }
    }
    Ok(())
}
