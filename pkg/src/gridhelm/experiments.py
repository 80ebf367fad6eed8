"""Experiment harness: the runtime-estimator protocol, the concurrent-client
load sweep, and the two-site migration timeline. Output CSV schemas are
frozen; they double as acceptance-test fixtures.
"""

from __future__ import annotations

import csv
import math
import statistics
import threading
import time
from dataclasses import dataclass
from typing import Optional

from . import estimators
from .core import EstimateKind, EstimateMethod, Estimate, JobType, TaskAttributes
from .history import TaskHistoryRecord
from .scenario import parse_scenario
from .stack import GridStack
from .steering import OptimizerPolicy


class ExperimentCheckFailed(AssertionError):
    """An experiment's built-in self-check did not hold."""


# ------------------------------------------------------------------ runtime

def experiment_runtime(history_file, test_file, out_csv=None) -> dict:
    """Fig. 5 analog: estimate each test case from the history, emit
    case,actual,estimated,pct_error rows plus both aggregate errors."""
    signed_mean, mape, evals = estimators.evaluate(history_file, test_file)
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "actual", "estimated", "pct_error"])
            for i, e in enumerate(evals, 1):
                w.writerow([i, repr(e.actual_runtime), repr(e.estimated_runtime),
                            repr(e.percentage_error)])
    return {"signed_mean_error": signed_mean, "mape": mape, "cases": evals}


# --------------------------------------------------------------------- load

LOAD_SCENARIO = """
site L1 slots=2 load=0:0.0 hb=1
task q1 site=L1 user=alice queue=short hours=1 prio=5 runtime=10 submit=0
task q2 site=L1 user=alice queue=short hours=1 prio=5 runtime=1000 submit=0
"""


def _percentile(values: list[float], pct: float) -> float:
    values = sorted(values)
    idx = min(len(values) - 1, max(0, math.ceil(pct / 100.0 * len(values)) - 1))
    return values[idx]


def _load_worker(gateway_url: str, n_requests: int, think_time: float, out_queue) -> None:
    """One load-generating client; runs in its own process so the generators
    never compete with the gateway for the interpreter."""
    from .gateway import RpcClient

    client = RpcClient(gateway_url)
    latencies = []
    failures = 0
    for _ in range(n_requests):
        t0 = time.perf_counter()
        try:
            client.call("monitor.query", task_id="q1")
        except Exception:
            failures += 1
        latencies.append((time.perf_counter() - t0) * 1000.0)
        if think_time:
            time.sleep(think_time)
    out_queue.put((latencies, failures))


def experiment_load(gateway_url: Optional[str] = None, sweep=(1, 5, 10, 25, 50),
                    requests_per_client: int = 100, think_time: float = 0.02,
                    out_csv=None) -> list[dict]:
    """Fig. 6 analog: N concurrent polling clients (dashboard model: one
    monitor.query per ``think_time``) each issue M requests; report mean and
    95th-percentile latency and failure counts per N."""
    import multiprocessing as mp

    server = None
    if gateway_url is None:
        stack = GridStack(parse_scenario(LOAD_SCENARIO))
        stack.advance(20.0)  # q1 terminal (store-served), q2 still live
        server = stack.serve()
        gateway_url = server.url
    rows = []
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    try:
        for n in sweep:
            out_queue = ctx.Queue()
            procs = [ctx.Process(target=_load_worker,
                                 args=(gateway_url, requests_per_client, think_time, out_queue))
                     for _ in range(n)]
            for p in procs:
                p.start()
            flat: list[float] = []
            failures = 0
            for _ in procs:
                lat, fail = out_queue.get()
                flat.extend(lat)
                failures += fail
            for p in procs:
                p.join()
            rows.append({
                "clients": n,
                "requests": n * requests_per_client,
                "mean_ms": statistics.fmean(flat),
                "p95_ms": _percentile(flat, 95.0),
                "failures": failures,
            })
    finally:
        if server is not None:
            server.stop()
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["clients", "requests", "mean_ms", "p95_ms", "failures"])
            w.writeheader()
            w.writerows(rows)
    return rows


# ---------------------------------------------------------------- migration

MIGRATION_TRUE_RUNTIME = 283.0
MIGRATION_DECISION_TIME = 282.0

MIGRATION_SCENARIO = """
# Two-site steering scenario: A carries competing load 1.0, B is free.
site A slots=1 load=0:1.0 cost=2.0 hb=1
site B slots=1 load=0:0.0 cost=1.0 hb=1
site REF slots=1 load=0:0.0 cost=1.0 hb=1
link A B 100000000
link B A 100000000
task job1 site=A user=alice queue=short hours=1 prio=5 runtime=283 submit=0 files=in:10000000 ckpt={CKPT}
task ref site=REF user=alice queue=short hours=1 prio=5 runtime=283 submit=0
"""


def _seed_migration_history(stack: GridStack, attrs: TaskAttributes, runtime: float, n: int = 5):
    # The free-CPU reference estimate: repeated identical runs, so the mean is exact.
    t0 = 1000.0
    for i in range(n):
        stack.store.add_record(TaskHistoryRecord(
            attributes=attrs,
            actual_runtime=runtime,
            status="successful",
            submit_time=t0 + i * 1000.0,
            start_time=t0 + i * 1000.0 + 1.0,
            completion_time=t0 + i * 1000.0 + 1.0 + runtime,
        ))


def experiment_migration(out_csv=None, checkpointable: bool = False,
                         horizon: float = 700.0, self_check: bool = True) -> dict:
    """Fig. 7 analog: per-second progress of the stay-put job on the loaded
    site, the optimizer-migrated run, and the free-CPU reference line."""
    scenario = parse_scenario(MIGRATION_SCENARIO.replace("{CKPT}", "1" if checkpointable else "0"))
    policy = OptimizerPolicy(objective="fast", check_interval=MIGRATION_DECISION_TIME,
                             slowdown_threshold=1.5, enabled=True)
    stack = GridStack(scenario, policy=policy, dual_run=True)
    attrs = next(t.attributes for t in scenario.tasks if t.task_id == "job1")
    _seed_migration_history(stack, attrs, MIGRATION_TRUE_RUNTIME)
    est = estimators.estimate_runtime(stack.store, attrs)
    stack.store.record_estimate("job1", est)
    stack.store.record_estimate("ref", est)
    stack.steering.watched_sites.update({"A", "B"})

    rows = []
    decision_time = None
    for t in range(int(horizon) + 1):
        stack.advance(float(t))
        fab = stack.fabric
        stay = fab.tasks["job1"].wall_clock_accumulated / MIGRATION_TRUE_RUNTIME * 100.0
        ref = fab.tasks["ref"].wall_clock_accumulated / MIGRATION_TRUE_RUNTIME * 100.0
        moved_task = fab.tasks.get("job1@moved")
        if moved_task is not None and decision_time is None:
            decision_time = next(e["time"] for e in stack.steering.audit_log
                                 if e["verb"] == "move" and e["target"] == "job1")
        migrated = (moved_task.wall_clock_accumulated / MIGRATION_TRUE_RUNTIME * 100.0
                    if moved_task is not None else stay)
        rows.append({"time": float(t), "reference_pct": min(100.0, ref),
                     "stay_pct": min(100.0, stay), "migrated_pct": min(100.0, migrated)})

    fab = stack.fabric
    result = {
        "rows": rows,
        "decision_time": decision_time,
        "reference_completion": fab.tasks["ref"].completion_time,
        "stay_completion": fab.tasks["job1"].completion_time,
        "migrated_completion": (fab.tasks["job1@moved"].completion_time
                                if "job1@moved" in fab.tasks else None),
        "checkpointable": checkpointable,
    }
    if self_check:
        if result["reference_completion"] != MIGRATION_TRUE_RUNTIME:
            raise ExperimentCheckFailed(
                f"reference completed at {result['reference_completion']}, expected 283")
        # At elapsed 282 on the load-1.0 site the job has accrued exactly 141 s
        # of wall-clock, i.e. it is progressing at half speed (roughly 50% done).
        stay_at_decision = next(r["stay_pct"] for r in rows if r["time"] == MIGRATION_DECISION_TIME)
        expected_pct = 141.0 / MIGRATION_TRUE_RUNTIME * 100.0
        if stay_at_decision != expected_pct:
            raise ExperimentCheckFailed(
                f"stay-put at decision time is {stay_at_decision}%, expected {expected_pct}%")
        if result["migrated_completion"] is None or result["stay_completion"] is None:
            raise ExperimentCheckFailed("runs did not complete inside the horizon")
        if not result["migrated_completion"] < result["stay_completion"]:
            raise ExperimentCheckFailed("migrated run did not beat the stay-put run")
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["time", "reference_pct", "stay_pct", "migrated_pct"])
            w.writeheader()
            w.writerows(rows)
    return result
