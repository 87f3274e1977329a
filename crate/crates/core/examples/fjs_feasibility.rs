//! Parses a flexible job shop, schedules it with a simple dispatch rule and
//! checks the result, then breaks it on purpose.

use std::error::Error;

use rapql::bench::parse_fjs;
use rapql::rap::{check_feasibility, encode_jsp, ResourceId, Schedule};

const SHOP: &str = "\
2 2 1.25
2 1 1 3 2 1 2 2 3
2 1 2 2 1 1 4
";

fn main() -> Result<(), Box<dyn Error>> {
    let fjs = parse_fjs(SHOP)?;
    println!("{} jobs, {} machines, flexibility {:.2}", fjs.num_jobs(), fjs.num_machines, fjs.flexibility());
    let enc = encode_jsp(&fjs.to_job_shop())?;

    // earliest-finish dispatch, job by job
    let mut free = vec![0u32; fjs.num_machines];
    let mut schedule = Schedule::new();
    for (j, job) in fjs.jobs.iter().enumerate() {
        let mut ready = 0;
        for (o, alts) in job.iter().enumerate() {
            let a = alts.iter().min_by_key(|a| free[a.machine - 1].max(ready) + a.duration).ok_or("empty operation")?;
            let start = free[a.machine - 1].max(ready);
            schedule.insert(ResourceId(a.machine as u32 - 1), start, enc.jobs[j][o], a.duration)?;
            free[a.machine - 1] = start + a.duration;
            ready = start + a.duration;
        }
    }
    for e in schedule.entries() {
        println!("  {} [{:>2}, {:>2}) {}", e.resource, e.start, e.finish(), e.op);
    }
    println!("feasible: {}", check_feasibility(&enc.instance, &schedule)?.is_feasible());

    let first = *schedule.entries().next().ok_or("empty schedule")?;
    schedule.remove(first.resource, first.start);
    let verdict = check_feasibility(&enc.instance, &schedule)?;
    println!("after dropping {}: violated properties {:?}", first.op, verdict.tags());
    Ok(())
}
