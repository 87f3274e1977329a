//! Parameterizable generator of industry-style instances with a known
//! zero-late-jobs reference schedule and a target slack ratio.
//!
//! Construction builds the reference schedule first: jobs are dispatched in
//! random order onto random eligible machines, inserting setups whenever a
//! machine changes product type. Release dates sit at or slightly before
//! each job's reference start; due dates are then placed so that every job
//! meets its due date and the mean slack ratio hits the target.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::metrics::{job_slack, slack_ratio};
use crate::rap::{
    check_feasibility, DurationDist, JobTable, OpId, RapBuilder, RapInstance, ResourceId, Schedule, ScheduleEntry,
    StateDist, StateId, TaskWindow,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationFamily {
    Fixed,
    /// Uniform over `nominal ± spread`, clipped at 1.
    Uniform { spread: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub machines: usize,
    pub jobs: usize,
    /// Inclusive range of machine tasks per job.
    pub tasks_per_job: (usize, usize),
    /// Inclusive range of nominal durations.
    pub durations: (u32, u32),
    pub family: DurationFamily,
    /// Inclusive range of eligible machines per task.
    pub alternatives: (usize, usize),
    /// Target mean slack ratio of the reference schedule.
    pub slack: f64,
    /// Product types with sequence-dependent setups between them; `None`
    /// disables setups.
    pub setup_types: Option<usize>,
    pub setup_durations: (u32, u32),
    /// Probability that a job ends with a cooling task, which needs no
    /// machine.
    pub cooling: f64,
    pub cooling_durations: (u32, u32),
    /// Tasks longer than the period are split into chained pieces of at most
    /// this length.
    pub preemption_period: Option<u32>,
    /// Largest amount by which a release date precedes the reference start.
    pub release_jitter: u32,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            machines: 16,
            jobs: 100,
            tasks_per_job: (1, 3),
            durations: (1, 9),
            family: DurationFamily::Fixed,
            alternatives: (1, 2),
            slack: 0.1,
            setup_types: None,
            setup_durations: (1, 3),
            cooling: 0.0,
            cooling_durations: (2, 6),
            preemption_period: None,
            release_jitter: 2,
            seed: 0,
        }
    }
}

/// Allowed tolerance between target and achieved slack ratio.
pub const SLACK_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("cannot reach the slack target: {0}")]
    Infeasible(String),
}

impl GeneratorSpec {
    fn check(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::Spec(m.to_string()));
        if self.machines == 0 || self.jobs == 0 {
            return bad("need at least one machine and one job");
        }
        if self.tasks_per_job.0 == 0 || self.tasks_per_job.0 > self.tasks_per_job.1 {
            return bad("tasks per job must be a nonempty range starting at 1 or more");
        }
        if self.durations.0 == 0 || self.durations.0 > self.durations.1 {
            return bad("durations must be a nonempty positive range");
        }
        let (lo, hi) = self.alternatives;
        if lo == 0 || lo > hi || hi > self.machines {
            return bad("alternatives must lie in 1..=machines");
        }
        if !(-0.5..=0.9).contains(&self.slack) {
            return bad("slack target must lie in [-0.5, 0.9]");
        }
        if self.setup_types == Some(0) {
            return bad("setups need at least one product type");
        }
        if self.setup_types.is_some() && (self.setup_durations.0 == 0 || self.setup_durations.0 > self.setup_durations.1) {
            return bad("setup durations must be a nonempty positive range");
        }
        if !(0.0..=1.0).contains(&self.cooling) {
            return bad("cooling probability must lie in [0, 1]");
        }
        if self.cooling > 0.0 && (self.cooling_durations.0 == 0 || self.cooling_durations.0 > self.cooling_durations.1) {
            return bad("cooling durations must be a nonempty positive range");
        }
        if self.preemption_period == Some(0) {
            return bad("preemption period must be positive");
        }
        if self.slack < 0.0 {
            return Err(GenerateError::Infeasible(format!(
                "a mean slack ratio of {} needs late jobs, but the reference schedule must have none",
                self.slack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: RapInstance,
    pub jobs: Arc<JobTable>,
    /// Feasible schedule with zero late jobs (durations at their maxima).
    pub reference: Schedule,
    /// Known optimum of the late-jobs measure.
    pub optimum: f64,
    pub reference_makespan: u32,
    pub achieved_slack: f64,
    /// Per job, the reference finish time.
    pub reference_finish: Vec<u32>,
}

enum Piece {
    Machine { alts: Vec<usize>, nominal: u32 },
    Cooling { nominal: u32 },
}

fn duration_dist(family: DurationFamily, nominal: u32) -> DurationDist {
    match family {
        DurationFamily::Fixed => DurationDist::point(nominal).expect("positive"),
        DurationFamily::Uniform { spread } => {
            let lo = nominal.saturating_sub(spread).max(1);
            let hi = nominal + spread;
            let p = 1.0 / f64::from(hi - lo + 1);
            DurationDist::new((lo..=hi).map(|d| (d, p)).collect()).expect("uniform support")
        }
    }
}

pub fn generate_instance(spec: &GeneratorSpec) -> Result<GeneratedInstance, GenerateError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.machines;

    // Job structure.
    let mut jobs: Vec<Vec<Piece>> = Vec::with_capacity(spec.jobs);
    let mut types = Vec::with_capacity(spec.jobs);
    for _ in 0..spec.jobs {
        let n = rng.gen_range(spec.tasks_per_job.0..=spec.tasks_per_job.1);
        let mut pieces = Vec::new();
        for _ in 0..n {
            let k = rng.gen_range(spec.alternatives.0..=spec.alternatives.1);
            let mut alts: Vec<usize> = (0..m).collect::<Vec<_>>().choose_multiple(&mut rng, k).copied().collect();
            alts.sort_unstable();
            let mut d = rng.gen_range(spec.durations.0..=spec.durations.1);
            if let Some(period) = spec.preemption_period {
                while d > period {
                    pieces.push(Piece::Machine { alts: alts.clone(), nominal: period });
                    d -= period;
                }
            }
            pieces.push(Piece::Machine { alts, nominal: d });
        }
        if spec.cooling > 0.0 && rng.gen_bool(spec.cooling) {
            pieces.push(Piece::Cooling { nominal: rng.gen_range(spec.cooling_durations.0..=spec.cooling_durations.1) });
        }
        jobs.push(pieces);
        types.push(spec.setup_types.map_or(0, |p| rng.gen_range(0..p)));
    }

    // Ids: machine states, then one cooling resource/state per cooling task.
    let p_types = spec.setup_types.unwrap_or(1);
    let num_tasks: usize = jobs.iter().map(Vec::len).sum();
    let num_cooling = jobs.iter().flatten().filter(|p| matches!(p, Piece::Cooling { .. })).count();
    let setup_ops = spec.setup_types.map_or(0, |p| if p > 1 { p } else { 0 });
    let machine_state = |mach: usize, ty: usize| StateId((mach * p_types + ty) as u32);
    let mut b = RapBuilder::new(m + num_cooling, m * p_types + num_cooling, num_tasks + setup_ops);
    for mach in 0..m {
        b.set_initial(ResourceId(mach as u32), StateDist::point(machine_state(mach, 0)));
    }

    // Setup matrix and setup operations (op `num_tasks + p` sets type p).
    let setup: Vec<Vec<u32>> = (0..p_types)
        .map(|q| {
            (0..p_types)
                .map(|p| if p == q { 0 } else { rng.gen_range(spec.setup_durations.0..=spec.setup_durations.1) })
                .collect()
        })
        .collect();
    if setup_ops > 0 {
        for p in 0..p_types {
            let op = OpId((num_tasks + p) as u32);
            for mach in 0..m {
                for q in (0..p_types).filter(|&q| q != p) {
                    b.capability(
                        machine_state(mach, q),
                        op,
                        DurationDist::point(setup[q][p]).expect("positive"),
                        StateDist::point(machine_state(mach, p)),
                    );
                }
            }
        }
    }

    let mut job_ops: Vec<Vec<OpId>> = Vec::with_capacity(spec.jobs);
    let mut next_op = 0u32;
    let mut next_cool = 0usize;
    let mut cool_resource = vec![None; num_tasks];
    let mut max_d = vec![0u32; num_tasks];
    for (j, pieces) in jobs.iter().enumerate() {
        let mut ids = Vec::with_capacity(pieces.len());
        for piece in pieces {
            let op = OpId(next_op);
            next_op += 1;
            b.mark_task(op);
            match piece {
                Piece::Machine { alts, nominal } => {
                    let dist = duration_dist(spec.family, *nominal);
                    max_d[op.index()] = dist.max();
                    for &mach in alts {
                        let s = machine_state(mach, types[j]);
                        b.capability(s, op, dist.clone(), StateDist::point(s));
                    }
                }
                Piece::Cooling { nominal } => {
                    let r = m + next_cool;
                    let s = StateId((m * p_types + next_cool) as u32);
                    next_cool += 1;
                    b.set_initial(ResourceId(r as u32), StateDist::point(s));
                    let dist = duration_dist(spec.family, *nominal);
                    max_d[op.index()] = dist.max();
                    b.capability(s, op, dist, StateDist::point(s));
                    cool_resource[op.index()] = Some(r);
                }
            }
            if let Some(&prev) = ids.last() {
                b.precede(prev, op);
            }
            ids.push(op);
        }
        job_ops.push(ids);
    }
    if setup_ops > 0 {
        b.set_non_task_cap((2 * num_tasks) as u32);
    }
    let instance = b.build();

    // Reference schedule by random list dispatching.
    let mut schedule = Schedule::new();
    let mut free = vec![0u32; m];
    let mut mtype = vec![0usize; m];
    let mut ready = vec![0u32; spec.jobs];
    let mut first_start = vec![None::<u32>; spec.jobs];
    let mut cursor = vec![0usize; spec.jobs];
    let mut open: Vec<usize> = (0..spec.jobs).collect();
    let insert = |s: &mut Schedule, r: usize, start: u32, op: OpId, d: u32| {
        s.insert_entry(ScheduleEntry { resource: ResourceId(r as u32), start, op, duration: d, end_state: None })
            .expect("reference entries never collide")
    };
    while !open.is_empty() {
        let pick = rng.gen_range(0..open.len());
        let j = open[pick];
        let k = cursor[j];
        let op = job_ops[j][k];
        let d = max_d[op.index()];
        let start = match &jobs[j][k] {
            Piece::Machine { alts, .. } => {
                let mach = *alts.choose(&mut rng).expect("nonempty");
                if mtype[mach] != types[j] {
                    let s = setup[mtype[mach]][types[j]];
                    insert(&mut schedule, mach, free[mach], OpId((num_tasks + types[j]) as u32), s);
                    free[mach] += s;
                    mtype[mach] = types[j];
                }
                let start = free[mach].max(ready[j]);
                insert(&mut schedule, mach, start, op, d);
                free[mach] = start + d;
                start
            }
            Piece::Cooling { .. } => {
                let r = cool_resource[op.index()].expect("cooling resource");
                insert(&mut schedule, r, ready[j], op, d);
                ready[j]
            }
        };
        first_start[j].get_or_insert(start);
        ready[j] = start + d;
        cursor[j] += 1;
        if cursor[j] == job_ops[j].len() {
            open.swap_remove(pick);
        }
    }
    let feas = check_feasibility(&instance, &schedule).expect("point-mass effects");
    debug_assert!(feas.is_feasible(), "{:?}", feas.violations);
    if !feas.is_feasible() {
        return Err(GenerateError::Spec(format!("reference schedule infeasible: {:?}", feas.violations)));
    }

    // Release and due dates.
    let finish = ready;
    let release: Vec<u32> = first_start
        .iter()
        .map(|s| {
            let s = s.expect("every job has a task");
            s - rng.gen_range(0..=spec.release_jitter.min(s))
        })
        .collect();
    let windows = due_dates(&release, &finish, spec.slack)?;
    let achieved = slack_ratio(&finish, &windows).map_err(|e| GenerateError::Infeasible(e.to_string()))?;
    if (achieved - spec.slack).abs() > SLACK_TOLERANCE {
        return Err(GenerateError::Infeasible(format!(
            "integral due dates reach slack {achieved:.4} against target {:.4}; use more jobs or longer tasks",
            spec.slack
        )));
    }
    let reference_makespan = schedule.entries().map(ScheduleEntry::finish).max().unwrap_or(0);
    Ok(GeneratedInstance {
        instance,
        jobs: Arc::new(JobTable::new(num_tasks + setup_ops, job_ops, windows)),
        reference: schedule,
        optimum: 0.0,
        reference_makespan,
        achieved_slack: achieved,
        reference_finish: finish,
    })
}

/// Integral due dates `B ≥ F` with mean `(B − F)/(B − A)` as close to
/// `target` as unit steps allow.
fn due_dates(release: &[u32], finish: &[u32], target: f64) -> Result<Vec<TaskWindow>, GenerateError> {
    let n = release.len() as f64;
    let mut due: Vec<u32> = release
        .iter()
        .zip(finish)
        .map(|(&a, &f)| {
            let exact = (f as f64 - target * a as f64) / (1.0 - target);
            (exact.round() as u32).max(f)
        })
        .collect();
    let window = |j: usize, d: u32| TaskWindow { release: release[j], due: d };
    let mean = |due: &[u32]| due.iter().enumerate().map(|(j, &d)| job_slack(finish[j], window(j, d))).sum::<f64>() / n;
    // Unit moves on the job whose move lands closest to the target.
    for _ in 0..4 * release.len() {
        let phi = mean(&due);
        let gap = target - phi;
        if gap.abs() <= SLACK_TOLERANCE / 4.0 {
            break;
        }
        let step: i64 = if gap > 0.0 { 1 } else { -1 };
        let best = (0..due.len())
            .filter(|&j| step > 0 || due[j] > finish[j])
            .map(|j| {
                let d = (due[j] as i64 + step) as u32;
                let delta = (job_slack(finish[j], window(j, d)) - job_slack(finish[j], window(j, due[j]))) / n;
                (j, (gap - delta).abs())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((j, err)) if err < gap.abs() => due[j] = (due[j] as i64 + step) as u32,
            _ => break,
        }
    }
    if finish.iter().zip(&due).any(|(f, d)| d < f) {
        return Err(GenerateError::Infeasible("a due date fell before its reference finish".into()));
    }
    Ok(due.iter().enumerate().map(|(j, &d)| window(j, d)).collect())
}
