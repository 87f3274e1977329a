#!/usr/bin/env python3
"""Build the bundled FJSP benchmark files and their reference bounds.

sdata files are the classical JSP instances written in .fjs form
(flexibility 1). edata-style files add alternative machines to a seeded
random subset of operations (target average flexibility 1.15, same
processing time on every alternative) and their optima are solved with
OR-Tools CP-SAT.

usage: derive_benchmarks.py <job_shop_lib benchmark_instances.json> <data dir>
"""
import json
import random
import sys
from pathlib import Path

from ortools.sat.python import cp_model

SDATA = {"mt06": "ft06", "mt10": "ft10", "la01": "la01", "la02": "la02",
         "la03": "la03", "la04": "la04", "la05": "la05"}
EDATA = {"mt06": "ft06", "la01": "la01", "la02": "la02", "la03": "la03",
         "la04": "la04"}
EXTRA_MACHINE_PROB = 0.15


def jobs_from_jsp(inst):
    jobs = []
    for durs, machs in zip(inst["duration_matrix"], inst["machines_matrix"]):
        jobs.append([[(m, d)] for m, d in zip(machs, durs)])
    return jobs


def add_flexibility(jobs, n_machines, seed):
    rng = random.Random(seed)
    out = []
    for job in jobs:
        new_job = []
        for alts in job:
            m, d = alts[0]
            alts = [(m, d)]
            if rng.random() < EXTRA_MACHINE_PROB:
                extra = rng.choice([k for k in range(n_machines) if k != m])
                alts.append((extra, d))
            new_job.append(sorted(alts))
        out.append(new_job)
    return out


def write_fjs(path, jobs, n_machines):
    n_ops = sum(len(j) for j in jobs)
    flex = sum(len(a) for j in jobs for a in j) / n_ops
    lines = [f"{len(jobs)} {n_machines} {flex:.2f}"]
    for job in jobs:
        parts = [str(len(job))]
        for alts in job:
            parts.append(str(len(alts)))
            for m, d in alts:
                parts += [str(m + 1), str(d)]
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def solve(jobs, n_machines, time_limit):
    model = cp_model.CpModel()
    horizon = sum(max(d for _, d in alts) for j in jobs for alts in j)
    per_machine = [[] for _ in range(n_machines)]
    ends = []
    for job in jobs:
        prev_end = None
        for alts in job:
            d = alts[0][1]
            start = model.NewIntVar(0, horizon, "")
            end = model.NewIntVar(0, horizon, "")
            model.Add(end == start + d)
            if len(alts) == 1:
                iv = model.NewIntervalVar(start, d, end, "")
                per_machine[alts[0][0]].append(iv)
            else:
                lits = []
                for m, dm in alts:
                    lit = model.NewBoolVar("")
                    iv = model.NewOptionalIntervalVar(start, dm, end, lit, "")
                    per_machine[m].append(iv)
                    lits.append(lit)
                model.AddExactlyOne(lits)
            if prev_end is not None:
                model.Add(start >= prev_end)
            prev_end = end
        ends.append(prev_end)
    for ivs in per_machine:
        model.AddNoOverlap(ivs)
    mk = model.NewIntVar(0, horizon, "")
    model.AddMaxEquality(mk, ends)
    model.Minimize(mk)
    solver = cp_model.CpSolver()
    solver.parameters.max_time_in_seconds = time_limit
    solver.parameters.num_workers = 1
    status = solver.Solve(model)
    assert status in (cp_model.OPTIMAL, cp_model.FEASIBLE)
    return int(solver.BestObjectiveBound()), int(solver.ObjectiveValue())


def main():
    src = json.load(open(sys.argv[1]))
    root = Path(sys.argv[2])
    bounds = []
    for name, key in SDATA.items():
        inst = src[key]
        jobs = jobs_from_jsp(inst)
        n_m = len(inst["duration_matrix"][0])
        write_fjs(root / "sdata" / f"{name}.fjs", jobs, n_m)
        meta = inst["metadata"]
        bounds.append(("sdata", name, meta["lower_bound"], meta["upper_bound"]))
    for i, (name, key) in enumerate(EDATA.items()):
        inst = src[key]
        n_m = len(inst["duration_matrix"][0])
        jobs = add_flexibility(jobs_from_jsp(inst), n_m, seed=1000 + i)
        write_fjs(root / "edata" / f"{name}.fjs", jobs, n_m)
        lb, ub = solve(jobs, n_m, time_limit=120.0)
        bounds.append(("edata", name, lb, ub))
    lines = ["# dataset instance lower_bound upper_bound"]
    lines += [f"{d} {n} {lb} {ub}" for d, n, lb, ub in bounds]
    (root / "bounds.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
