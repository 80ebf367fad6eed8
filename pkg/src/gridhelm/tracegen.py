"""Seeded synthetic accounting traces for the runtime-estimator experiments.

Each template (user, queue, job_type, nodes) has a base rate; a row's runtime
is ``base * requested_cpu_hours * lognormal(sigma)``. With sigma=0 runtimes
are exactly collinear in requested_cpu_hours, so the regression estimator
must recover them to rounding error.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class TraceTemplate:
    user: str
    account: str
    queue: str
    partition: str
    job_type: str
    nodes: int
    base_rate: float  # seconds of runtime per requested cpu-hour


DEFAULT_TEMPLATES = [
    TraceTemplate("alice", "hep", "short", "batch_a", "batch", 4, 900.0),
    TraceTemplate("bob", "hep", "short", "batch_a", "batch", 8, 1400.0),
    TraceTemplate("carol", "bio", "long", "batch_b", "batch", 16, 2500.0),
    TraceTemplate("dave", "bio", "long", "batch_b", "interactive", 2, 600.0),
    TraceTemplate("erin", "astro", "gpu", "batch_c", "batch", 32, 3600.0),
]


def generate_rows(n: int, sigma: float, seed: int, templates=DEFAULT_TEMPLATES) -> list[dict]:
    rng = random.Random(seed)
    rows = []
    t0 = 800_000_000.0
    for i in range(n):
        tpl = templates[i % len(templates)]
        hours = round(rng.uniform(0.5, 8.0), 3)
        noise = rng.lognormvariate(0.0, sigma) if sigma > 0 else 1.0
        runtime = tpl.base_rate * hours * noise
        submit = t0 + i * 120.0
        start = submit + rng.uniform(1.0, 60.0)
        rows.append(
            {
                "account": tpl.account,
                "user": tpl.user,
                "partition": tpl.partition,
                "nodes": tpl.nodes,
                "job_type": tpl.job_type,
                "status": "successful",
                "requested_cpu_hours": hours,
                "queue": tpl.queue,
                "cpu_charge_rate": 1.0,
                "idle_charge_rate": 0.1,
                "submit": submit,
                "start": start,
                "complete": start + runtime,
            }
        )
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    from .history import TRACE_FIELDS

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def generate_trace_files(history_path, test_path, n_history=100, n_test=20, sigma=0.0, seed=0):
    """Write a history/test CSV pair in the 100+20 protocol shape."""
    history = generate_rows(n_history, sigma, seed)
    test = generate_rows(n_test, sigma, seed + 10_000)
    with open(history_path, "w") as fh:
        fh.write(rows_to_csv(history))
    with open(test_path, "w") as fh:
        fh.write(rows_to_csv(test))
