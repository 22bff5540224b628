"""Batch execution of scenarios: per-seed rows, aggregates, CSV and manifest."""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .. import __version__
from ..bounds import lower_bound
from ..env.sim import simulate
from ..errors import AoiSchedError
from ..index.policies import GreedyPolicy, RoundRobinPolicy, WhittlePolicy, whittle_eta
from ..learners.dqn import DqnConfig, DqnGreedyPolicy, dqn_train
from ..learners.sarsa_lfa import SarsaSchedules, sarsa_lfa_run
from ..learners.ucrl2 import ucrl2_vi_run, ucrl2_whittle_run
from ..numerics import mean_ci
from ..planning.lagrange import solve_constrained
from ..planning.policies import policy_to_text
from .scenario import LEARNERS

log = logging.getLogger(__name__)

# failures recorded in the status column instead of aborting the batch
RUN_ERRORS = (AoiSchedError, ValueError, TypeError, ArithmeticError)

CSV_FIELDS = ("scenario", "name", "policy", "lam", "M", "seed", "J", "C", "ci_J", "ci_C", "bound", "status")


@dataclass
class ResultRow:
    scenario: str                # scenario digest
    name: str
    policy: str
    lam: float
    M: int
    seed: object                 # int, or "mean" for the aggregate row
    J: float
    C: float
    ci_J: float = float("nan")
    ci_C: float = float("nan")
    bound: Optional[float] = None
    status: str = "ok"
    wall_time: float = 0.0       # manifest only; kept out of the CSV so reruns are byte-identical

    @property
    def ok(self):
        return self.status == "ok"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if v != v else repr(v)
    return str(v)


def write_csv_atomic(path, rows, fields_=CSV_FIELDS):
    """Write rows to a temp file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields_)
            for r in rows:
                w.writerow([_fmt(getattr(r, f) if not isinstance(r, dict) else r[f]) for f in fields_])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json_atomic(path, obj):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def versions():
    import scipy
    import yaml

    return {"aoisched": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


# ---------------------------------------------------------------- planning

def prepare(scenario, lam, policy):
    """Per-(lambda, policy) setup shared by all seeds: solved policies for
    planners, keyword arguments for learners."""
    config = scenario.config(lam)
    proto = scenario.build_protocol()
    params = dict(scenario.params.get(policy, {}))
    if policy == "optimal":
        sol = solve_constrained(config, proto, lam=lam)
        return {"policy": sol.policy, "eta": sol.eta}
    if policy == "whittle":
        eta = params.get("eta")
        if eta is None:
            eta, _ = whittle_eta(config, proto, lam)
        return {"policy": WhittlePolicy(config, proto, eta), "eta": eta}
    if policy == "greedy":
        return {"policy": GreedyPolicy(config, proto)}
    if policy == "round-robin":
        return {"policy": RoundRobinPolicy(config, proto)}
    return {"params": params}


def run_one(scenario, lam, policy, seed, prepared):
    """One (lambda, policy, seed) run; returns (row, training curve or None)."""
    t0 = time.perf_counter()
    config = scenario.config(lam)
    proto = scenario.build_protocol()
    curve = None
    row = ResultRow(scenario.digest(), scenario.name, policy, float(lam), scenario.M, int(seed),
                    float("nan"), float("nan"))
    try:
        if "error" in prepared:
            raise prepared["error"]
        if policy not in LEARNERS:
            tr = simulate(config, proto, prepared["policy"], scenario.horizon, seed, record_states=False)
        else:
            tr, curve = _learn(scenario, config, proto, lam, policy, seed, prepared["params"])
        row.J, row.C = float(tr.J), float(tr.C)
    except RUN_ERRORS as exc:
        row.status = f"error: {type(exc).__name__}: {exc}"
    row.wall_time = time.perf_counter() - t0
    return row, curve


def _learn(scenario, config, proto, lam, policy, seed, params):
    h = scenario.horizon
    if policy == "ucrl2-vi":
        return ucrl2_vi_run(config, proto, lam, horizon=h, seed=seed, **params), None
    if policy == "ucrl2-whittle":
        return ucrl2_whittle_run(config, proto, lam, horizon=h, seed=seed, **params), None
    if policy == "sarsa-lfa":
        sched_keys = {f.name for f in fields(SarsaSchedules)}
        sched = SarsaSchedules(**{k: v for k, v in params.items() if k in sched_keys})
        rest = {k: v for k, v in params.items() if k not in sched_keys}
        return sarsa_lfa_run(config, proto, lam, schedules=sched, horizon=h, seed=seed, **rest), None
    if policy == "dqn":
        res = dqn_train(config, proto, DqnConfig(**params), scenario.episodes, seed)
        curve = [{"episode": i + 1, "J": float(j), "C": float(c), "epsilon": float(e), "loss": float(l)}
                 for i, (j, c, e, l) in enumerate(zip(res.episode_J, res.episode_C, res.episode_eps,
                                                      res.episode_loss))]
        return simulate(config, proto, DqnGreedyPolicy(res.params), h, seed, record_states=False), curve
    raise ValueError(f"unknown learner {policy!r}")


def _task(args):
    return run_one(*args)


def aggregate(rows, bound):
    ok = [r for r in rows if r.ok]
    first = rows[0]
    agg = ResultRow(first.scenario, first.name, first.policy, first.lam, first.M, "mean",
                    float("nan"), float("nan"), bound=bound)
    if ok:
        agg.J, agg.ci_J = mean_ci([r.J for r in ok])
        agg.C, agg.ci_C = mean_ci([r.C for r in ok])
    failed = len(rows) - len(ok)
    if failed:
        agg.status = f"{failed} of {len(rows)} seeds failed"
    agg.wall_time = sum(r.wall_time for r in rows)
    return agg


def run_scenario(scenario, jobs=1, out_dir=None, write=True):
    """Run every (lambda, policy, seed) of a scenario.

    Returns the rows: per-seed rows followed by one aggregate row for each
    (lambda, policy), which also carries the matching lower bound. With
    `write`, the CSV, DQN training curves and a manifest go to `out_dir`
    (default: scenario.out).
    """
    t0 = time.perf_counter()
    tasks, groups = [], []
    for lam in scenario.lams:
        for policy in scenario.policies:
            try:
                prepared = prepare(scenario, lam, policy)
            except RUN_ERRORS as exc:
                prepared = {"error": exc}
            groups.append((lam, policy, len(tasks), len(scenario.seeds)))
            tasks.extend((scenario, lam, policy, s, prepared) for s in scenario.seeds)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    rows, curves = [], {}
    for lam, policy, start, n in groups:
        seed_rows = [results[i][0] for i in range(start, start + n)]
        for i in range(start, start + n):
            if results[i][1] is not None:
                curves[(lam, policy, tasks[i][3])] = results[i][1]
        lb = lower_bound(scenario.config(lam), scenario.build_protocol())
        rows.extend(seed_rows)
        rows.append(aggregate(seed_rows, lb))

    if write:
        write_outputs(scenario, rows, curves, out_dir or scenario.out, time.perf_counter() - t0, jobs)
    return rows


def write_outputs(scenario, rows, curves, out_dir, wall, jobs=1):
    csv_path = os.path.join(out_dir, f"{scenario.name}.csv")
    write_csv_atomic(csv_path, rows)
    files = [os.path.basename(csv_path)]
    for (lam, policy, seed), curve in sorted(curves.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        p = os.path.join(out_dir, f"{scenario.name}-{policy}-lam{lam:g}-seed{seed}-episodes.csv")
        write_csv_atomic(p, curve, ("episode", "J", "C", "epsilon", "loss"))
        files.append(os.path.basename(p))
    manifest = {
        "manifest_version": 1,
        "scenario_hash": scenario.digest(),
        "scenario": scenario.to_spec(),
        "seeds": list(scenario.seeds),
        "versions": versions(),
        "files": files,
        "jobs": jobs,
        "wall_time_s": round(wall, 3),
        "row_wall_time_s": [round(r.wall_time, 4) for r in rows],
    }
    write_json_atomic(os.path.join(out_dir, f"{scenario.name}.manifest.json"), manifest)
    return csv_path


# ------------------------------------------------------------------ solve

SOLVE_FIELDS = ("scenario", "name", "lam", "eta", "J", "C", "construction", "states", "bound")


def solve_scenario(scenario, out_dir=None, write=True):
    """Constrained optimum for every lambda; also writes each policy table."""
    t0 = time.perf_counter()
    proto = scenario.build_protocol()
    out_dir = out_dir or scenario.out
    rows = []
    for lam in scenario.lams:
        config = scenario.config(lam)
        sol = solve_constrained(config, proto, lam=lam)
        space = sol.search.policy.space
        rows.append({"scenario": scenario.digest(), "name": scenario.name, "lam": float(lam), "eta": float(sol.eta),
                     "J": float(sol.J), "C": float(sol.C), "construction": sol.construction, "states": space.size,
                     "bound": lower_bound(config, proto)})
        if write:
            os.makedirs(out_dir, exist_ok=True)
            path = os.path.join(out_dir, f"{scenario.name}-lam{lam:g}.policy")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(policy_to_text(sol.policy, proto))
    if write:
        write_csv_atomic(os.path.join(out_dir, f"{scenario.name}-solve.csv"), rows, SOLVE_FIELDS)
        write_json_atomic(os.path.join(out_dir, f"{scenario.name}-solve.manifest.json"),
                          {"manifest_version": 1, "scenario_hash": scenario.digest(), "scenario": scenario.to_spec(),
                           "versions": versions(), "wall_time_s": round(time.perf_counter() - t0, 3)})
    return rows
