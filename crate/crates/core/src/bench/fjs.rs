//! The `.fjs` flexible job shop format.
//!
//! Line 1 is `<jobs> <machines> [avg-flexibility]`. Each following non-blank
//! line is one job: `<#ops>`, then per operation `<#alternatives>` followed by
//! that many `<machine> <duration>` pairs. Machines are 1-based.

use std::fmt::Write as _;

use thiserror::Error;

use crate::rap::JobShop;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FjsError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

/// One alternative: 1-based machine and duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alternative {
    pub machine: usize,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FjsInstance {
    pub num_machines: usize,
    /// Flexibility from the header, when present.
    pub declared_flexibility: Option<f64>,
    pub jobs: Vec<Vec<Vec<Alternative>>>,
}

impl FjsInstance {
    pub fn num_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn num_operations(&self) -> usize {
        self.jobs.iter().map(Vec::len).sum()
    }

    /// Mean number of alternatives per operation.
    pub fn flexibility(&self) -> f64 {
        let alts: usize = self.jobs.iter().flatten().map(Vec::len).sum();
        alts as f64 / self.num_operations().max(1) as f64
    }

    pub fn to_job_shop(&self) -> JobShop {
        JobShop {
            num_machines: self.num_machines,
            jobs: self
                .jobs
                .iter()
                .map(|j| j.iter().map(|op| op.iter().map(|a| (a.machine - 1, a.duration)).collect()).collect())
                .collect(),
        }
    }

    pub fn from_job_shop(shop: &JobShop) -> Self {
        Self {
            num_machines: shop.num_machines,
            declared_flexibility: None,
            jobs: shop
                .jobs
                .iter()
                .map(|j| {
                    j.iter().map(|op| op.iter().map(|&(m, d)| Alternative { machine: m + 1, duration: d }).collect()).collect()
                })
                .collect(),
        }
    }

    /// Canonical text: header with flexibility to two decimals, one job per
    /// line.
    pub fn serialize(&self) -> String {
        let mut out = format!("{} {} {:.2}\n", self.num_jobs(), self.num_machines, self.flexibility());
        for job in &self.jobs {
            let _ = write!(out, "{}", job.len());
            for op in job {
                let _ = write!(out, " {}", op.len());
                for a in op {
                    let _ = write!(out, " {} {}", a.machine, a.duration);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn numbers(line: &str, lineno: usize) -> Result<Vec<u64>, FjsError> {
    line.split_whitespace()
        .map(|t| t.parse::<u64>().map_err(|_| FjsError::Parse { line: lineno, msg: format!("expected an integer, got {t:?}") }))
        .collect()
}

pub fn parse_fjs(text: &str) -> Result<FjsInstance, FjsError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or(FjsError::Empty)?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() < 2 || head.len() > 3 {
        return Err(FjsError::Parse { line: hl, msg: "header needs <jobs> <machines> [flexibility]".into() });
    }
    let int = |t: &str| t.parse::<usize>().map_err(|_| FjsError::Parse { line: hl, msg: format!("expected an integer, got {t:?}") });
    let num_jobs = int(head[0])?;
    let num_machines = int(head[1])?;
    let declared_flexibility = match head.get(2) {
        Some(t) => Some(t.parse::<f64>().map_err(|_| FjsError::Parse { line: hl, msg: format!("bad flexibility {t:?}") })?),
        None => None,
    };
    if num_machines == 0 {
        return Err(FjsError::Invalid { line: hl, msg: "no machines".into() });
    }
    let mut jobs = Vec::with_capacity(num_jobs);
    for (lineno, line) in lines {
        if jobs.len() == num_jobs {
            return Err(FjsError::Parse { line: lineno, msg: format!("more than {num_jobs} job lines") });
        }
        let nums = numbers(line, lineno)?;
        let truncated = || FjsError::Parse { line: lineno, msg: "job line ends early".into() };
        let mut it = nums.into_iter();
        let n_ops = it.next().ok_or_else(truncated)?;
        let mut job = Vec::with_capacity(n_ops as usize);
        for _ in 0..n_ops {
            let n_alt = it.next().ok_or_else(truncated)?;
            if n_alt == 0 {
                return Err(FjsError::Invalid { line: lineno, msg: format!("operation {} has no alternatives", job.len() + 1) });
            }
            let mut op = Vec::with_capacity(n_alt as usize);
            for _ in 0..n_alt {
                let m = it.next().ok_or_else(truncated)? as usize;
                let d = it.next().ok_or_else(truncated)?;
                if m == 0 || m > num_machines {
                    return Err(FjsError::Invalid { line: lineno, msg: format!("machine {m} outside 1..={num_machines}") });
                }
                let duration = u32::try_from(d)
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| FjsError::Invalid { line: lineno, msg: format!("duration {d} must be in 1..=u32::MAX") })?;
                op.push(Alternative { machine: m, duration });
            }
            job.push(op);
        }
        if it.next().is_some() {
            return Err(FjsError::Parse { line: lineno, msg: "trailing numbers after the last operation".into() });
        }
        jobs.push(job);
    }
    if jobs.len() != num_jobs {
        return Err(FjsError::Parse { line: text.lines().count().max(1), msg: format!("expected {num_jobs} jobs, found {}", jobs.len()) });
    }
    Ok(FjsInstance { num_machines, declared_flexibility, jobs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_file() {
        let f = parse_fjs("1 2\n2 1 1 3 1 2 5\n").unwrap();
        assert_eq!((f.num_jobs(), f.num_machines), (1, 2));
        assert_eq!(f.jobs[0], vec![vec![Alternative { machine: 1, duration: 3 }], vec![Alternative { machine: 2, duration: 5 }]]);
        assert_eq!(f.flexibility(), 1.0);
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(parse_fjs(""), Err(FjsError::Empty));
        assert_eq!(parse_fjs("\n  \n"), Err(FjsError::Empty));
        assert!(matches!(parse_fjs("1 2\n2 1 1 3 1 x 5\n"), Err(FjsError::Parse { line: 2, .. })));
        assert!(matches!(parse_fjs("1 2\n1 1 3 3\n"), Err(FjsError::Invalid { line: 2, .. })));
        assert!(matches!(parse_fjs("1 2\n\n2 1 1 3\n"), Err(FjsError::Parse { line: 3, .. })));
        assert!(matches!(parse_fjs("2 2\n1 1 1 3\n"), Err(FjsError::Parse { .. })));
        assert!(matches!(parse_fjs("1 2\n1 0\n"), Err(FjsError::Invalid { .. })));
    }

    #[test]
    fn round_trip() {
        let text = "2 3 1.33\n2 2 1 4 3 2 1 2 6\n1 1 3 7\n";
        let f = parse_fjs(text).unwrap();
        assert_eq!(f.serialize(), text);
        assert_eq!(parse_fjs(&f.serialize()).unwrap().jobs, f.jobs);
        assert_eq!(FjsInstance::from_job_shop(&f.to_job_shop()).jobs, f.jobs);
    }
}
