//! Performance measures over (partial) schedules.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{OpId, RapInstance, Schedule, ScheduleError};

/// Composition function of a γ-composable measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Max,
    Min,
    Sum,
}

impl Composition {
    /// Identity element. `Max` assumes nonnegative values.
    pub fn identity(self) -> f64 {
        match self {
            Composition::Max | Composition::Sum => 0.0,
            Composition::Min => f64::INFINITY,
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Composition::Max => a.max(b),
            Composition::Min => a.min(b),
            Composition::Sum => a + b,
        }
    }
}

/// Release and due date of a task (or job).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskWindow {
    pub release: u32,
    pub due: u32,
}

/// Job structure plus release/due dates, supplied by the benchmark layer for
/// lateness-based measures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JobTable {
    pub jobs: Vec<Vec<OpId>>,
    pub job_windows: Vec<TaskWindow>,
    /// Per operation; `None` for non-tasks and tasks without dates.
    pub task_windows: Vec<Option<TaskWindow>>,
    pub job_of: Vec<Option<u32>>,
}

impl JobTable {
    /// Job table whose task windows equal their job's window.
    pub fn new(num_ops: usize, jobs: Vec<Vec<OpId>>, job_windows: Vec<TaskWindow>) -> Self {
        let mut task_windows = vec![None; num_ops];
        let mut job_of = vec![None; num_ops];
        for (j, tasks) in jobs.iter().enumerate() {
            for t in tasks {
                task_windows[t.index()] = Some(job_windows[j]);
                job_of[t.index()] = Some(j as u32);
            }
        }
        Self { jobs, job_windows, task_windows, job_of }
    }

    pub fn num_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn window(&self, task: OpId) -> Option<TaskWindow> {
        self.task_windows.get(task.index()).copied().flatten()
    }

    pub fn job_of(&self, task: OpId) -> Option<usize> {
        self.job_of.get(task.index()).copied().flatten().map(|j| j as usize)
    }
}

pub type TaskCostFn = dyn Fn(OpId, u32) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum MeasureKind {
    Makespan,
    /// Sum over tasks of `max(0, finish - due)`.
    TotalLateness,
    /// Number of jobs finished after their due date.
    LateJobCount,
    /// Per-task cost of a finish time, combined with the measure's
    /// composition.
    Custom { name: String, cost: Arc<TaskCostFn> },
}

impl fmt::Debug for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Makespan => write!(f, "Makespan"),
            MeasureKind::TotalLateness => write!(f, "TotalLateness"),
            MeasureKind::LateJobCount => write!(f, "LateJobCount"),
            MeasureKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MeasureError {
    #[error("measure {0} needs job release/due data (see the benchmark layer)")]
    MissingJobData(&'static str),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone)]
pub struct PerformanceMeasure {
    pub kind: MeasureKind,
    pub composition: Composition,
    /// Non-decreasing in completion times.
    pub regular: bool,
    pub jobs: Option<Arc<JobTable>>,
}

impl PerformanceMeasure {
    pub fn makespan() -> Self {
        Self { kind: MeasureKind::Makespan, composition: Composition::Max, regular: true, jobs: None }
    }

    pub fn total_lateness(jobs: Arc<JobTable>) -> Self {
        Self { kind: MeasureKind::TotalLateness, composition: Composition::Sum, regular: true, jobs: Some(jobs) }
    }

    pub fn late_jobs(jobs: Arc<JobTable>) -> Self {
        Self { kind: MeasureKind::LateJobCount, composition: Composition::Sum, regular: true, jobs: Some(jobs) }
    }

    pub fn custom(
        name: impl Into<String>,
        composition: Composition,
        regular: bool,
        cost: impl Fn(OpId, u32) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: MeasureKind::Custom { name: name.into(), cost: Arc::new(cost) },
            composition,
            regular,
            jobs: None,
        }
    }

    pub fn identity(&self) -> f64 {
        self.composition.identity()
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            MeasureKind::Makespan => "makespan",
            MeasureKind::TotalLateness => "total-lateness",
            MeasureKind::LateJobCount => "late-jobs",
            MeasureKind::Custom { name, .. } => name,
        }
    }

    pub fn job_table(&self) -> Result<&JobTable, MeasureError> {
        match &self.jobs {
            Some(j) => Ok(j),
            None => Err(MeasureError::MissingJobData(match self.kind {
                MeasureKind::TotalLateness => "total-lateness",
                _ => "late-jobs",
            })),
        }
    }

    pub fn check(&self) -> Result<(), MeasureError> {
        match self.kind {
            MeasureKind::TotalLateness | MeasureKind::LateJobCount => self.job_table().map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Updated performance of a partial solution after `op` finished at
    /// `finish`. `job_done` is true when this completion finishes `op`'s job.
    pub(crate) fn absorb(&self, perf: f64, op: OpId, is_task: bool, finish: u32, job_done: bool) -> f64 {
        match &self.kind {
            MeasureKind::Makespan => perf.max(finish as f64),
            MeasureKind::TotalLateness => {
                let w = self.jobs.as_ref().and_then(|j| j.window(op));
                match (is_task, w) {
                    (true, Some(w)) => perf + finish.saturating_sub(w.due) as f64,
                    _ => perf,
                }
            }
            MeasureKind::LateJobCount => {
                if !(is_task && job_done) {
                    return perf;
                }
                let jobs = self.jobs.as_ref().expect("checked at construction");
                match jobs.job_of(op) {
                    Some(j) if finish > jobs.job_windows[j].due => perf + 1.0,
                    _ => perf,
                }
            }
            MeasureKind::Custom { cost, .. } => {
                if is_task {
                    self.composition.apply(perf, cost(op, finish))
                } else {
                    perf
                }
            }
        }
    }
}

/// Value of the measure on a schedule (one realization). Partial schedules
/// are scored as complete solutions of the sub-problem they cover; late-job
/// counts include only jobs whose tasks all appear in the schedule.
pub fn evaluate_measure(
    measure: &PerformanceMeasure,
    instance: &RapInstance,
    schedule: &Schedule,
) -> Result<f64, MeasureError> {
    measure.check()?;
    let entries = schedule.resolved(instance)?;
    let value = match &measure.kind {
        MeasureKind::Makespan => entries.iter().map(|e| e.finish()).max().unwrap_or(0) as f64,
        MeasureKind::TotalLateness => {
            let jobs = measure.job_table()?;
            entries
                .iter()
                .filter(|e| instance.is_task(e.op))
                .filter_map(|e| jobs.window(e.op).map(|w| e.finish().saturating_sub(w.due) as f64))
                .sum()
        }
        MeasureKind::LateJobCount => {
            let jobs = measure.job_table()?;
            let mut finish = vec![None::<u32>; instance.num_ops()];
            for e in &entries {
                let f = finish[e.op.index()].get_or_insert(0);
                *f = (*f).max(e.finish());
            }
            let mut late = 0.0;
            for (j, tasks) in jobs.jobs.iter().enumerate() {
                let live: Vec<OpId> = tasks.iter().copied().filter(|t| !instance.is_cancelled(*t)).collect();
                if live.is_empty() {
                    continue;
                }
                let done: Option<Vec<u32>> = live.iter().map(|t| finish[t.index()]).collect();
                if let Some(times) = done {
                    if times.into_iter().max().unwrap() > jobs.job_windows[j].due {
                        late += 1.0;
                    }
                }
            }
            late
        }
        MeasureKind::Custom { cost, .. } => entries
            .iter()
            .filter(|e| instance.is_task(e.op))
            .fold(measure.identity(), |acc, e| measure.composition.apply(acc, cost(e.op, e.finish()))),
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rap::{ResourceId, StateDist, StateId};

    fn chain() -> RapInstance {
        let mut b = RapInstance::builder(1, 1, 2);
        b.mark_task(OpId(0));
        b.mark_task(OpId(1));
        b.fixed(StateId(0), OpId(0), 3);
        b.fixed(StateId(0), OpId(1), 4);
        b.precede(OpId(0), OpId(1));
        b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
        b.build()
    }

    #[test]
    fn makespan_of_chain() {
        let inst = chain();
        let mut s = Schedule::new();
        s.insert(ResourceId(0), 0, OpId(0), 3).unwrap();
        s.insert(ResourceId(0), 3, OpId(1), 4).unwrap();
        assert_eq!(evaluate_measure(&PerformanceMeasure::makespan(), &inst, &s).unwrap(), 7.0);

        let mut a = Schedule::new();
        a.insert(ResourceId(0), 0, OpId(0), 3).unwrap();
        let mut b = Schedule::new();
        b.insert(ResourceId(0), 3, OpId(1), 4).unwrap();
        let ka = evaluate_measure(&PerformanceMeasure::makespan(), &inst, &a).unwrap();
        let kb = evaluate_measure(&PerformanceMeasure::makespan(), &inst, &b).unwrap();
        assert_eq!(Composition::Max.apply(ka, kb), 7.0);
        assert_eq!(evaluate_measure(&PerformanceMeasure::makespan(), &inst, &Schedule::new()).unwrap(), 0.0);
    }

    #[test]
    fn lateness_measures() {
        let inst = chain();
        let jobs = Arc::new(JobTable::new(2, vec![vec![OpId(0), OpId(1)]], vec![TaskWindow { release: 0, due: 5 }]));
        let mut s = Schedule::new();
        s.insert(ResourceId(0), 0, OpId(0), 3).unwrap();
        s.insert(ResourceId(0), 3, OpId(1), 4).unwrap();
        assert_eq!(evaluate_measure(&PerformanceMeasure::total_lateness(jobs.clone()), &inst, &s).unwrap(), 2.0);
        assert_eq!(evaluate_measure(&PerformanceMeasure::late_jobs(jobs.clone()), &inst, &s).unwrap(), 1.0);
        // unfinished job is not counted
        let mut partial = Schedule::new();
        partial.insert(ResourceId(0), 0, OpId(0), 3).unwrap();
        assert_eq!(evaluate_measure(&PerformanceMeasure::late_jobs(jobs), &inst, &partial).unwrap(), 0.0);
    }

    #[test]
    fn lateness_without_jobs_is_an_error() {
        let m = PerformanceMeasure { jobs: None, ..PerformanceMeasure::makespan() };
        assert!(m.check().is_ok());
        let late = PerformanceMeasure { kind: MeasureKind::LateJobCount, ..m };
        assert!(matches!(evaluate_measure(&late, &chain(), &Schedule::new()), Err(MeasureError::MissingJobData(_))));
    }

    #[test]
    fn custom_weighted_completion() {
        let inst = chain();
        let m = PerformanceMeasure::custom("weighted-completion", Composition::Sum, true, |op, f| {
            (op.0 + 1) as f64 * f as f64
        });
        let mut s = Schedule::new();
        s.insert(ResourceId(0), 0, OpId(0), 3).unwrap();
        s.insert(ResourceId(0), 3, OpId(1), 4).unwrap();
        assert_eq!(evaluate_measure(&m, &inst, &s).unwrap(), 3.0 + 14.0);
    }
}
