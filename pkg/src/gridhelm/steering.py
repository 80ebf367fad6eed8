"""Steering Service: plan subscription, authorized job control, the placement
optimizer, failure recovery, and session management.

Migration pipeline (``move``): extract the task from its source site, ship its
input and produced files over the link, then enqueue at the destination with
the checkpoint applied when the task is checkpointable. ``dual_run=True``
reproduces the paper-style chart where the source copy keeps running and the
migrated run is a clone.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import ConcretePlan, Estimate, Job, Task, TaskState, to_doc, transition
from .errors import (
    BadCredentials,
    DuplicatePlan,
    GridHelmError,
    NoAliveSites,
    SessionExpired,
    Unauthorized,
    UnknownSite,
    UnknownTask,
)
from . import estimators
from .history import HistoryStore
from .scheduler import Scheduler

log = logging.getLogger(__name__)

HEARTBEAT_FAILURE_THRESHOLD = 3  # consecutive missed beats before a site is declared failed


@dataclass
class Session:
    session_id: str
    user: str
    role: str  # "user" | "admin"
    expires_at: float


@dataclass
class SteeringCommand:
    session_id: str
    verb: str  # kill | pause | resume | set_priority | move
    task_id: Optional[str] = None
    job_id: Optional[str] = None
    priority: Optional[int] = None
    target_site: Optional[str] = None  # None means move(auto)


@dataclass
class OptimizerPolicy:
    objective: str = "fast"  # "fast" | "cheap"
    check_interval: float = 10.0
    slowdown_threshold: float = 1.5
    enabled: bool = True

    def __post_init__(self):
        if self.slowdown_threshold <= 1:
            raise ValueError("slowdown_threshold must be > 1")
        if self.check_interval <= 0:
            raise ValueError("check_interval must be > 0")
        if self.objective not in ("fast", "cheap"):
            raise ValueError(f"objective must be fast or cheap, got {self.objective!r}")


class AccountingStub:
    """Per-site cost rates with a debit ledger; the quota service prototype."""

    def __init__(self, fabric):
        self.fabric = fabric
        self.ledger: list[dict] = []

    def cost_rate(self, site_id: str) -> float:
        return self.fabric.sites[site_id].cost_rate

    def debit(self, task_id: str, site_id: str, cpu_seconds: float) -> None:
        self.ledger.append(
            {"task_id": task_id, "site_id": site_id,
             "amount": self.cost_rate(site_id) * cpu_seconds, "at": self.fabric.clock}
        )


class SteeringService:
    def __init__(self, fabric, store: HistoryStore, scheduler: Scheduler,
                 credentials: Optional[dict[str, tuple[str, str]]] = None,
                 policy: Optional[OptimizerPolicy] = None,
                 session_ttl: float = 3600.0,
                 dual_run: bool = False,
                 audit_path=None):
        self.fabric = fabric
        self.store = store
        self.scheduler = scheduler
        self.credentials = credentials or {}  # user -> (password, role)
        self.policy = policy or OptimizerPolicy()
        self.session_ttl = session_ttl
        self.dual_run = dual_run
        self.audit_path = audit_path
        self.accounting = AccountingStub(fabric)

        self.sessions: dict[str, Session] = {}
        self._dead_sessions: set[str] = set()
        self._session_counter = 0
        self.jobs: dict[str, Job] = {}
        self._plan_of: dict[str, str] = {}
        self.watched_sites: set[str] = set()
        self._seen_plans: set[tuple[str, float]] = set()
        self.audit_log: list[dict] = []
        self.notifications: list[dict] = []
        self.downloads: dict[str, dict] = {}
        self.failed_sites: set[str] = set()
        self.parked_moving: dict[str, Optional[str]] = {}  # task_id -> excluded site
        self._notified: set[str] = set()
        self._debited: set[str] = set()
        self._moved: set[str] = set()

    # -------------------------------------------------------------- sessions

    @classmethod
    def load_credentials(cls, path) -> dict[str, tuple[str, str]]:
        """Flat credential file: `user:password:role` per line."""
        creds = {}
        for line in open(path).read().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            user, password, role = line.split(":")
            creds[user] = (password, role)
        return creds

    def login(self, user: str, credential: str) -> Session:
        entry = self.credentials.get(user)
        if entry is None or entry[0] != credential:
            raise BadCredentials(f"bad credentials for user {user!r}")
        self._session_counter += 1
        session = Session(
            session_id=f"s{self._session_counter}-{user}",
            user=user,
            role=entry[1],
            expires_at=self.fabric.clock + self.session_ttl,
        )
        self.sessions[session.session_id] = session
        return session

    def logout(self, session_id: str) -> None:
        if self.sessions.pop(session_id, None) is not None:
            self._dead_sessions.add(session_id)

    def _session(self, session_id) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            if session_id in self._dead_sessions:
                raise SessionExpired(f"session {session_id!r} was logged out")
            raise Unauthorized(f"no such session {session_id!r}")
        if session.expires_at <= self.fabric.clock:
            self.sessions.pop(session_id, None)
            raise SessionExpired(f"session {session_id!r} is expired")
        return session

    def _authorize(self, session: Session, task: Task) -> None:
        if session.role == "admin":
            return
        owner = task.attributes.user
        if task.job_id and task.job_id in self.jobs:
            owner = self.jobs[task.job_id].owner
        if owner != session.user:
            raise Unauthorized(f"user {session.user!r} does not own task {task.task_id!r}")

    # ------------------------------------------------------------ subscriber

    def subscribe_plan(self, plan: ConcretePlan, job: Job) -> set[str]:
        """Dispatch a concrete plan: all-or-nothing site validation, estimates
        recorded, ready tasks enqueued, involved sites watched."""
        key = (plan.job_id, plan.plan_time)
        if key in self._seen_plans:
            raise DuplicatePlan(f"plan for job {plan.job_id!r} at t={plan.plan_time} already subscribed")
        missing = set(plan.assignments) ^ set(job.tasks)
        if missing:
            raise ValueError(f"plan does not cover job tasks exactly: {sorted(missing)}")
        for site_id in plan.assignments.values():
            if site_id not in self.fabric.sites:
                raise UnknownSite(site_id)
        self._seen_plans.add(key)
        self.jobs[job.job_id] = job
        for task_id, site_id in plan.assignments.items():
            task = job.tasks[task_id]
            self._plan_of[task_id] = site_id
            if task.submitted_estimate is None:
                task.submitted_estimate = estimators.estimate_runtime(self.store, task.attributes)
            self.store.record_estimate(task_id, task.submitted_estimate)
        self.watched_sites.update(plan.assignments.values())
        self.release_ready(job)
        self._audit("system", "subscribe_plan", plan.job_id, "ok")
        return set(plan.assignments.values())

    def release_ready(self, job: Optional[Job] = None) -> list[str]:
        """Enqueue PLANNED tasks whose precedence predecessors completed."""
        released = []
        jobs = [job] if job is not None else list(self.jobs.values())
        for j in jobs:
            for task_id in sorted(j.tasks):
                task = j.tasks[task_id]
                if task.state is not TaskState.PLANNED:
                    continue
                preds = [a for a, b in j.edges if b == task_id]
                if all(j.tasks[p].state is TaskState.COMPLETED for p in preds):
                    site_id = self._plan_of.get(task_id)
                    if site_id is None:
                        continue
                    transition(task, TaskState.QUEUED, self.fabric.clock)
                    self.fabric.enqueue(site_id, task)
                    released.append(task_id)
        return released

    # ------------------------------------------------------ command processor

    def execute_command(self, cmd: SteeringCommand) -> Task:
        session = self._session(cmd.session_id)
        task = self.fabric.tasks.get(cmd.task_id)
        if task is None:
            raise UnknownTask(cmd.task_id)
        self._authorize(session, task)
        try:
            result = self._execute(cmd, task, initiator=session.session_id)
        except GridHelmError as exc:
            self._audit(session.session_id, cmd.verb, cmd.task_id, f"error:{exc.name}")
            raise
        return result

    def _execute(self, cmd: SteeringCommand, task: Task, initiator: str,
                 score_table: Optional[list] = None) -> Task:
        site_id = task.assigned_site or self.fabric.resident_site(task.task_id)
        if cmd.verb in ("kill", "pause", "resume"):
            self.fabric.control(site_id, task.task_id, cmd.verb)
        elif cmd.verb == "set_priority":
            self.fabric.control(site_id, task.task_id, "set_priority", priority=cmd.priority)
        elif cmd.verb == "move":
            self._move(task, cmd.target_site, initiator, score_table)
        else:
            raise ValueError(f"unknown steering verb {cmd.verb!r}")
        args = {}
        if cmd.priority is not None:
            args["priority"] = cmd.priority
        if cmd.target_site is not None:
            args["target_site"] = cmd.target_site
        self._audit(initiator, cmd.verb, task.task_id, "ok", score_table, args or None)
        return task

    def _move(self, task: Task, target_site: Optional[str], initiator: str,
              score_table: Optional[list] = None) -> None:
        source = task.assigned_site or self.fabric.resident_site(task.task_id)
        if source is None:
            raise UnknownTask(f"{task.task_id} is not resident anywhere")
        if self.dual_run:
            moved = self._clone_for_dual_run(task)
            checkpoint = task.wall_clock_accumulated if task.checkpointable else None
            local_files = self.fabric.local_files(task.task_id)
            moving_task = moved
            if checkpoint is not None:
                moved.wall_clock_accumulated = checkpoint
        else:
            moving_task, checkpoint, local_files = self.fabric.extract_task(source, task.task_id)
        if target_site is None:
            dest, _ = self.scheduler.resubmit(moving_task, exclude_site=source,
                                              checkpoint=checkpoint, data_site=source)
        else:
            if target_site not in self.fabric.sites:
                raise UnknownSite(target_site)
            dest = target_site
            if self.store.lookup_estimate(moving_task.task_id) is None and moving_task.submitted_estimate:
                self.store.record_estimate(moving_task.task_id, moving_task.submitted_estimate)
        nbytes = sum(s for _, s in task.attributes.input_files) + sum(s for _, s in local_files)

        def deliver(at: float) -> None:
            if moving_task.state is TaskState.MOVING or moving_task.state is TaskState.PLANNED:
                transition(moving_task, TaskState.QUEUED, at)
            self.fabric.enqueue(dest, moving_task)
            self.watched_sites.add(dest)

        if nbytes > 0 and dest != source:
            self.fabric.transfer(source, dest, nbytes, callback=deliver, task_id=moving_task.task_id)
        else:
            deliver(self.fabric.clock)
        self._moved.add(task.task_id)

    def _clone_for_dual_run(self, task: Task) -> Task:
        clone_id = f"{task.task_id}@moved"
        estimate = task.submitted_estimate or self.store.lookup_estimate(task.task_id)
        clone = Task(
            task_id=clone_id,
            attributes=task.attributes,
            state=TaskState.PLANNED,
            checkpointable=task.checkpointable,
            job_id=task.job_id,
            submitted_estimate=estimate,
        )
        self.fabric.clone_hidden(task.task_id, clone_id)
        self.fabric.tasks[clone_id] = clone
        if estimate is not None:
            self.store.record_estimate(clone_id, estimate)
        return clone

    # --------------------------------------------------------------- optimizer

    def move_scores(self, task: Task) -> Optional[dict]:
        """Score table for stay-vs-move of one running/queued task; None when
        no estimate is available. The what-if panel serves these numbers."""
        est = self.store.lookup_estimate(task.task_id) or task.submitted_estimate
        if est is None:
            return None
        current = task.assigned_site or self.fabric.resident_site(task.task_id)
        if current is None or current not in self.fabric.sites:
            return None
        accrued = task.wall_clock_accumulated
        remaining = max(0.0, est.value - accrued)
        site = self.fabric.sites[current]
        nbytes = sum(s for _, s in task.attributes.input_files) + sum(
            s for _, s in self.fabric.local_files(task.task_id)
        )
        rows = []
        if self.policy.objective == "cheap":
            stay = self.accounting.cost_rate(current) * remaining
        else:
            stay = remaining * (1.0 + site.load_factor)
        for site_id in self.fabric.alive_sites():
            if site_id == current:
                continue
            cand = self.fabric.sites[site_id]
            cand_remaining = remaining if task.checkpointable else est.value
            try:
                if self.policy.objective == "cheap":
                    score = self.accounting.cost_rate(site_id) * cand_remaining
                else:
                    queue_est = estimators.estimate_queue_time(
                        self.fabric, self.store, site_id, prospective=task)
                    transfer = (estimators.estimate_transfer_time(
                        self.fabric, current, site_id, nbytes).value if nbytes > 0 else 0.0)
                    score = queue_est.value + cand_remaining * (1.0 + cand.load_factor) + transfer
            except GridHelmError as exc:
                log.info("candidate %s skipped for %s: %s", site_id, task.task_id, exc)
                continue
            rows.append({"site": site_id, "score": score})
        rows.sort(key=lambda r: (r["score"], r["site"]))
        return {"task_id": task.task_id, "current_site": current, "stay_score": stay,
                "objective": self.policy.objective, "candidates": rows}

    def optimizer_tick(self) -> list[SteeringCommand]:
        if not self.policy.enabled:
            return []
        issued = []
        now = self.fabric.clock
        for task_id in sorted(self.fabric.tasks):
            task = self.fabric.tasks[task_id]
            if task.state is not TaskState.RUNNING or task.start_time is None:
                continue
            if task_id in self._moved:
                continue
            site_id = task.assigned_site
            if site_id is None or site_id not in self.watched_sites:
                continue
            if not self.fabric.sites[site_id].alive:
                continue
            elapsed = now - task.start_time
            if elapsed <= 0:
                continue
            progress_ratio = task.wall_clock_accumulated / elapsed
            if progress_ratio >= 1.0 / self.policy.slowdown_threshold:
                continue
            table = self.move_scores(task)
            if table is None or not table["candidates"]:
                continue
            best = table["candidates"][0]
            if best["score"] < table["stay_score"]:
                cmd = SteeringCommand(session_id="optimizer", verb="move",
                                      task_id=task_id, target_site=None)
                self._execute(cmd, task, initiator="optimizer", score_table=table)
                issued.append(cmd)
            else:
                self._audit("optimizer", "stay", task_id, "ok", table)
        return issued

    # ---------------------------------------------------------------- recovery

    def recovery_tick(self) -> list[dict]:
        actions: list[dict] = []
        now = self.fabric.clock
        # 0. A previously failed site with fresh heartbeats is back in service.
        for site_id in sorted(self.failed_sites):
            site = self.fabric.sites[site_id]
            last = self.fabric.last_heartbeat.get(site_id, 0.0)
            if site.alive and now - last < HEARTBEAT_FAILURE_THRESHOLD * site.heartbeat_interval:
                self.failed_sites.discard(site_id)
        # 1. Heartbeat failure detection over the watch list.
        for site_id in sorted(self.watched_sites):
            if site_id in self.failed_sites:
                continue
            site = self.fabric.sites[site_id]
            last = self.fabric.last_heartbeat.get(site_id, 0.0)
            if now - last >= HEARTBEAT_FAILURE_THRESHOLD * site.heartbeat_interval:
                self.failed_sites.add(site_id)
                if site.alive:
                    # Heartbeats stalled but the fabric never recorded the
                    # failure (e.g. partition); treat as failed.
                    self.fabric.fail_site(site_id)
                displaced = self.fabric.evacuate(site_id)
                for task in displaced:
                    self.parked_moving[task.task_id] = site_id
                actions.append({"action": "site_failed", "site": site_id,
                                "tasks": [t.task_id for t in displaced]})
        # 2. Resubmit parked MOVING tasks.
        for task_id in sorted(self.parked_moving):
            exclude = self.parked_moving[task_id]
            task = self.fabric.tasks[task_id]
            try:
                dest, _ = self.scheduler.resubmit(task, exclude_site=exclude)
            except NoAliveSites:
                continue  # stays parked, retried next tick
            transition(task, TaskState.QUEUED, now)
            self.fabric.enqueue(dest, task)
            self.watched_sites.add(dest)
            del self.parked_moving[task_id]
            actions.append({"action": "resubmitted", "task": task_id, "site": dest})
            self._audit("recovery", "resubmit", task_id, f"to:{dest}")
        # 3. Notifications and download staging for failed/completed tasks.
        for task_id in sorted(self.fabric.tasks):
            task = self.fabric.tasks[task_id]
            if task_id in self._notified:
                continue
            if task.state is TaskState.FAILED:
                files = self.fabric.local_files(task_id)
                self.downloads[task_id] = {"task_id": task_id, "state": "FAILED",
                                           "files": files, "at": now}
                self.notifications.append({"task_id": task_id, "event": "failed",
                                           "owner": task.attributes.user, "at": now})
                self._notified.add(task_id)
                actions.append({"action": "notified_failure", "task": task_id})
            elif task.state is TaskState.COMPLETED:
                self.downloads[task_id] = {
                    "task_id": task_id, "state": "COMPLETED",
                    "files": self.fabric.local_files(task_id),
                    "completion_time": task.completion_time, "at": now,
                }
                self.notifications.append({"task_id": task_id, "event": "completed",
                                           "owner": task.attributes.user, "at": now})
                self._notified.add(task_id)
                if task_id not in self._debited and task.assigned_site:
                    self.accounting.debit(task_id, task.assigned_site, task.wall_clock_accumulated)
                    self._debited.add(task_id)
                actions.append({"action": "notified_completion", "task": task_id})
        self.release_ready()
        return actions

    def download_state(self, task_id: str) -> dict:
        doc = self.downloads.get(task_id)
        if doc is None:
            raise UnknownTask(f"no downloadable state for {task_id!r}")
        return doc

    # ------------------------------------------------------------------ audit

    def _audit(self, session: str, verb: str, target: Optional[str], outcome: str,
               score_table: Optional[dict] = None, args: Optional[dict] = None) -> None:
        entry = {"time": self.fabric.clock, "session": session, "verb": verb,
                 "target": target, "outcome": outcome}
        if score_table is not None:
            entry["score_table"] = score_table
        if args is not None:
            entry["args"] = args
        self.audit_log.append(entry)
        if self.audit_path:
            with open(self.audit_path, "a") as fh:
                fh.write(json.dumps(to_doc(entry), sort_keys=True) + "\n")
