//! Generates plants with a known zero-late-jobs reference schedule at a few
//! slack targets.

use std::error::Error;

use rapql::bench::{generate_instance, GeneratorSpec};
use rapql::rap::{check_feasibility, evaluate_measure, PerformanceMeasure};

fn main() -> Result<(), Box<dyn Error>> {
    println!("{:>6} {:>6} {:>9} {:>9} {:>6}", "slack", "tasks", "achieved", "makespan", "late");
    for (seed, slack) in [0.0, 0.1, 0.2, 0.3].into_iter().enumerate() {
        let spec = GeneratorSpec { machines: 8, jobs: 30, slack, seed: seed as u64, ..GeneratorSpec::default() };
        let g = generate_instance(&spec)?;
        assert!(check_feasibility(&g.instance, &g.reference)?.is_feasible());
        let late = evaluate_measure(&PerformanceMeasure::late_jobs(g.jobs.clone()), &g.instance, &g.reference)?;
        println!(
            "{slack:>6.2} {:>6} {:>9.3} {:>9} {late:>6}",
            g.instance.num_tasks(),
            g.achieved_slack,
            g.reference_makespan
        );
    }
    Ok(())
}
