"""The Estimator Service: history-based runtime prediction, queue-wait
estimation from remaining submitted estimates, and bandwidth-model transfer
times.

The runtime estimator walks the similarity templates from most to least
specific, and at the first rank with samples picks between the sample mean
and an ordinary least squares fit on requested_cpu_hours by leave-one-out
MAPE. All sums use ``math.fsum`` so results are invariant to history order.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from .core import (
    Estimate,
    EstimateEvaluation,
    EstimateKind,
    EstimateMethod,
    TaskAttributes,
    TaskState,
    mean_absolute_percentage_error,
    percentage_error,
    signed_mean_error,
)
from .errors import EmptyHistory, MissingSubmittedEstimate, NoLink, SiteDown, UnknownTask
from .history import HistoryStore, TaskHistoryRecord, TEMPLATE_FIELDS


def _fmean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def fit_ols(xs: Sequence[float], ys: Sequence[float]) -> Optional[tuple[float, float]]:
    """Least-squares (slope, intercept) of ys against xs; None if degenerate."""
    n = len(xs)
    if n < 2:
        return None
    xbar = _fmean(xs)
    ybar = _fmean(ys)
    sxx = math.fsum((x - xbar) ** 2 for x in xs)
    if sxx == 0.0:
        return None
    sxy = math.fsum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, ybar - slope * xbar


def _loo_mape_mean(ys: Sequence[float]) -> float:
    n = len(ys)
    total = math.fsum(ys)
    errs = []
    for i, y in enumerate(ys):
        pred = (total - y) / (n - 1)
        errs.append(abs(percentage_error(y, pred)))
    return _fmean(errs)


def _loo_mape_regression(xs: Sequence[float], ys: Sequence[float]) -> float:
    errs = []
    for i in range(len(xs)):
        rest_x = xs[:i] + xs[i + 1:]
        rest_y = ys[:i] + ys[i + 1:]
        fit = fit_ols(rest_x, rest_y)
        if fit is None:
            pred = _fmean(rest_y)
        else:
            slope, intercept = fit
            pred = slope * xs[i] + intercept
        errs.append(abs(percentage_error(ys[i], max(0.0, pred))))
    return _fmean(errs)


def estimate_runtime(store: HistoryStore, attributes: TaskAttributes) -> Estimate:
    samples: list[TaskHistoryRecord] = []
    rank = 3
    for rank in range(len(TEMPLATE_FIELDS)):
        samples = store.similar_tasks(attributes, rank)
        if samples:
            break
    if not samples:
        raise EmptyHistory("no successful history records at any template rank")
    # Sort for order-independence; fsum makes the statistics exact anyway.
    samples = sorted(samples, key=lambda r: (r.completion_time, r.start_time, r.actual_runtime))
    ys = [r.actual_runtime for r in samples]
    xs = [r.attributes.requested_cpu_hours for r in samples]
    n = len(samples)
    mean_value = _fmean(ys)
    method = EstimateMethod.MEAN
    value = mean_value
    fit = fit_ols(xs, ys) if n >= 3 else None
    if fit is not None:
        if _loo_mape_regression(xs, ys) < _loo_mape_mean(ys):
            slope, intercept = fit
            value = slope * attributes.requested_cpu_hours + intercept
            method = EstimateMethod.LINEAR_REGRESSION
    return Estimate(
        kind=EstimateKind.RUNTIME,
        value=max(0.0, value),
        method=method,
        sample_count=n,
        template_rank=rank,
    )


def estimate_queue_time(fabric, store: HistoryStore, site_id: str,
                        task_id: Optional[str] = None,
                        prospective=None) -> Estimate:
    """Expected queue wait for a resident queued task (``task_id``) or a task
    about to be queued (``prospective``: a Task or TaskAttributes)."""
    site = fabric.sites.get(site_id)
    if site is None:
        from .errors import UnknownSite

        raise UnknownSite(site_id)
    if not site.alive:
        raise SiteDown(site_id)
    if task_id is not None:
        if task_id not in site.queue and task_id not in site.running:
            raise UnknownTask(f"{task_id} not resident at {site_id}")
        task = fabric.tasks[task_id]
        priority = task.attributes.priority
        position = site.queue.index(task_id) if task_id in site.queue else -1
    else:
        attrs = getattr(prospective, "attributes", prospective)
        priority = attrs.priority
        position = None  # joins behind every equal-priority task

    candidates: list[str] = []
    for idx, tid in enumerate(site.queue):
        if tid == task_id:
            continue
        p = fabric.tasks[tid].attributes.priority
        if p > priority:
            candidates.append(tid)
        elif p == priority:
            if position is None or idx < position:
                candidates.append(tid)
    if len(site.running) >= site.cpu_slots:
        candidates.extend(sorted(site.running))

    remainders = []
    for tid in candidates:
        est = store.lookup_estimate(tid)
        if est is None:
            raise MissingSubmittedEstimate(tid)
        elapsed = fabric.tasks[tid].wall_clock_accumulated
        remainders.append(max(0.0, est.value - elapsed))
    value = math.fsum(remainders) / site.cpu_slots
    return Estimate(
        kind=EstimateKind.QUEUE,
        value=value,
        method=EstimateMethod.EXACT_SUM,
        sample_count=len(candidates),
        template_rank=0,
    )


def estimate_transfer_time(fabric, from_site: str, to_site: str, nbytes) -> Estimate:
    """Transfer time over one link; multi-file inputs sum sequentially."""
    link = fabric.links.get((from_site, to_site))
    if link is None:
        raise NoLink(f"{from_site} -> {to_site}")
    sizes = nbytes if isinstance(nbytes, (list, tuple)) else [nbytes]
    value = math.fsum(float(s) / link.bandwidth for s in sizes)
    return Estimate(
        kind=EstimateKind.TRANSFER,
        value=value,
        method=EstimateMethod.BANDWIDTH_MODEL,
        sample_count=len(sizes),
        template_rank=0,
    )


def evaluate(history_file, test_file) -> tuple[float, float, list[EstimateEvaluation]]:
    """Run the 100-history / 20-test protocol: load history, predict each test
    row from attributes only, report (signed mean error, MAPE, per-case list)."""
    from .history import record_from_trace_row
    import csv

    store = HistoryStore()
    store.ingest_trace(history_file)
    with open(test_file) as fh:
        rows = list(csv.DictReader(fh))
    evals = []
    for row in rows:
        rec = record_from_trace_row(row)
        est = estimate_runtime(store, rec.attributes)
        evals.append(EstimateEvaluation.of(rec.actual_runtime, est.value))
    return signed_mean_error(evals), mean_absolute_percentage_error(evals), evals
