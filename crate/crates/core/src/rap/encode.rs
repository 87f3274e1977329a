//! Encodings of classical problems (JSP, FJSP, TSP) as RAP instances.

use thiserror::Error;

use super::{DurationDist, OpId, RapInstance, ResourceId, StateDist, StateId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("instance has no jobs")]
    NoJobs,
    #[error("job {job} operation {op} has no capable machine")]
    NoMachine { job: usize, op: usize },
    #[error("machine {machine} out of range (have {machines})")]
    MachineOutOfRange { machine: usize, machines: usize },
    #[error("duration must be positive (job {job} operation {op})")]
    ZeroDuration { job: usize, op: usize },
    #[error("graph needs at least two vertices")]
    TooFewVertices,
    #[error("bad edge ({0}, {1})")]
    BadEdge(usize, usize),
}

/// A (flexible) job shop: `jobs[j][k]` lists the `(machine, duration)`
/// alternatives of the `k`-th operation of job `j`. Machines are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobShop {
    pub num_machines: usize,
    pub jobs: Vec<Vec<Vec<(usize, u32)>>>,
}

impl JobShop {
    /// Classical JSP: one machine per operation.
    pub fn classical(num_machines: usize, jobs: Vec<Vec<(usize, u32)>>) -> Self {
        Self { num_machines, jobs: jobs.into_iter().map(|j| j.into_iter().map(|a| vec![a]).collect()).collect() }
    }

    pub fn num_operations(&self) -> usize {
        self.jobs.iter().map(Vec::len).sum()
    }

    /// Mean number of alternative machines per operation.
    pub fn flexibility(&self) -> f64 {
        let n = self.num_operations();
        if n == 0 {
            return 0.0;
        }
        self.jobs.iter().flatten().map(Vec::len).sum::<usize>() as f64 / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct EncodedJobShop {
    pub instance: RapInstance,
    /// Task ids per job, in chain order.
    pub jobs: Vec<Vec<OpId>>,
}

/// Machine `m` becomes resource `m` with the single state `m`; each operation
/// becomes a task with point-mass durations on its capable machines.
pub fn encode_jsp(shop: &JobShop) -> Result<EncodedJobShop, EncodeError> {
    if shop.jobs.iter().all(Vec::is_empty) {
        return Err(EncodeError::NoJobs);
    }
    let m = shop.num_machines;
    let mut b = RapInstance::builder(m, m, shop.num_operations());
    for r in 0..m {
        b.set_initial(ResourceId(r as u32), StateDist::point(StateId(r as u32)));
    }
    let mut jobs = Vec::with_capacity(shop.jobs.len());
    let mut next = 0u32;
    for (j, job) in shop.jobs.iter().enumerate() {
        let mut ids = Vec::with_capacity(job.len());
        for (k, alts) in job.iter().enumerate() {
            if alts.is_empty() {
                return Err(EncodeError::NoMachine { job: j, op: k });
            }
            let op = OpId(next);
            next += 1;
            b.mark_task(op);
            for &(machine, dur) in alts {
                if machine >= m {
                    return Err(EncodeError::MachineOutOfRange { machine, machines: m });
                }
                if dur == 0 {
                    return Err(EncodeError::ZeroDuration { job: j, op: k });
                }
                b.fixed(StateId(machine as u32), op, dur);
            }
            if let Some(&prev) = ids.last() {
                b.precede(prev, op);
            }
            ids.push(op);
        }
        jobs.push(ids);
    }
    Ok(EncodedJobShop { instance: b.build(), jobs })
}

/// Undirected weighted graph on vertices `0..n`; vertex 0 is the home city.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    pub num_vertices: usize,
    pub edges: Vec<(usize, usize, u32)>,
}

impl WeightedGraph {
    pub fn complete(n: usize, weight: impl Fn(usize, usize) -> u32) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, weight(i, j)));
            }
        }
        Self { num_vertices: n, edges }
    }
}

/// One salesman resource whose state is its current city. Visiting city `j`
/// from city `i` takes the edge weight and moves the salesman to `j`; every
/// other city must be visited before returning home, so the measure is the
/// latest arrival time (makespan).
pub fn encode_tsp(graph: &WeightedGraph) -> Result<RapInstance, EncodeError> {
    let n = graph.num_vertices;
    if n < 2 {
        return Err(EncodeError::TooFewVertices);
    }
    let mut b = RapInstance::builder(1, n, n);
    for v in 0..n {
        b.mark_task(OpId(v as u32));
    }
    for &(i, j, w) in &graph.edges {
        if i >= n || j >= n || i == j || w == 0 {
            return Err(EncodeError::BadEdge(i, j));
        }
        let d = DurationDist::point(w).map_err(|_| EncodeError::BadEdge(i, j))?;
        b.capability(StateId(i as u32), OpId(j as u32), d.clone(), StateDist::point(StateId(j as u32)));
        b.capability(StateId(j as u32), OpId(i as u32), d, StateDist::point(StateId(i as u32)));
    }
    for v in 1..n {
        b.precede(OpId(v as u32), OpId(0));
    }
    b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
    Ok(b.build())
}
