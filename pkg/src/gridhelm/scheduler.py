"""Planner stub: broadcasts task attributes to every alive site's estimator,
collects runtime estimates and load, and assigns each task to the site
minimizing ``runtime_estimate * (1 + load_factor) + queue_estimate`` (plus the
input-file transfer estimate when the data lives elsewhere). Also the
resubmission target used by steering recovery and migration.
"""

from __future__ import annotations

import logging
from typing import Optional

from .core import ConcretePlan, Estimate, EstimateKind, EstimateMethod, Job, Task
from .errors import EstimationFailed, GridHelmError, NoAliveSites
from . import estimators
from .history import HistoryStore

log = logging.getLogger(__name__)


class Scheduler:
    def __init__(self, fabric, store: HistoryStore, scheduler_id: str = "scheduler",
                 site_stores: Optional[dict[str, HistoryStore]] = None):
        self.fabric = fabric
        self.store = store
        self.scheduler_id = scheduler_id
        # Per-site histories model each site's own estimator; sites without
        # one fall back to the shared store.
        self.site_stores = site_stores or {}
        self.steering = None  # wired by the stack; plans are forwarded there

    def _store_for(self, site_id: str) -> HistoryStore:
        return self.site_stores.get(site_id, self.store)

    # ------------------------------------------------------------- scoring

    def score_site(self, task: Task, site_id: str, data_site: Optional[str] = None,
                   checkpoint: Optional[float] = None) -> tuple[float, Estimate]:
        """Expected time-to-completion score for one task on one site."""
        site = self.fabric.sites[site_id]
        runtime_est = estimators.estimate_runtime(self._store_for(site_id), task.attributes)
        remaining = runtime_est.value
        if checkpoint is not None:
            remaining = max(0.0, remaining - checkpoint)
        queue_est = estimators.estimate_queue_time(self.fabric, self.store, site_id, prospective=task)
        score = remaining * (1.0 + site.load_factor) + queue_est.value
        sizes = [s for _, s in task.attributes.input_files]
        if data_site is not None and data_site != site_id and sizes:
            score += estimators.estimate_transfer_time(self.fabric, data_site, site_id, sizes).value
        return score, runtime_est

    def _best_site(self, task: Task, candidates: list[str], data_site: Optional[str],
                   checkpoint: Optional[float] = None) -> tuple[str, Estimate]:
        scored = []
        for site_id in candidates:
            try:
                score, runtime_est = self.score_site(task, site_id, data_site, checkpoint)
            except GridHelmError as exc:
                log.warning("site %s excluded from planning: %s", site_id, exc)
                continue
            site = self.fabric.sites[site_id]
            scored.append((score, site.cost_rate, site_id, runtime_est))
        if not scored:
            raise NoAliveSites("no site produced an estimate")
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        _, _, best, runtime_est = scored[0]
        return best, runtime_est

    # ---------------------------------------------------------- operations

    def plan(self, job: Job, data_site: Optional[str] = None, submit: bool = True) -> ConcretePlan:
        alive = self.fabric.alive_sites()
        if not alive:
            raise NoAliveSites("no alive sites registered")
        assignments: dict[str, str] = {}
        estimates: dict[str, Estimate] = {}
        for task_id in sorted(job.tasks):
            task = job.tasks[task_id]
            best, runtime_est = self._best_site(task, alive, data_site)
            assignments[task_id] = best
            estimates[task_id] = runtime_est
        plan = ConcretePlan(
            job_id=job.job_id,
            assignments=assignments,
            created_by=self.scheduler_id,
            plan_time=self.fabric.clock,
        )
        for task_id, est in estimates.items():
            job.tasks[task_id].submitted_estimate = est
        if submit and self.steering is not None:
            self.steering.subscribe_plan(plan, job)
        return plan

    def resubmit(self, task: Task, exclude_site: Optional[str] = None,
                 checkpoint: Optional[float] = None,
                 data_site: Optional[str] = None) -> tuple[str, Estimate]:
        """Plan a single displaced task over the alive sites minus the one it
        came from. Records a fresh submitted estimate. Returns (site, estimate)."""
        candidates = [s for s in self.fabric.alive_sites() if s != exclude_site]
        if not candidates:
            raise NoAliveSites(f"no alive sites besides {exclude_site!r}")
        best, runtime_est = self._best_site(task, candidates, data_site, checkpoint)
        task.submitted_estimate = runtime_est
        self.store.record_estimate(task.task_id, runtime_est)
        return best, runtime_est
