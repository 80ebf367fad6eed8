"""Discrete-event simulated execution fabric: sites, queues, load-scaled progress,
file links, failures, heartbeats, and a deterministic virtual clock.

The fabric is a single logical state machine; all mutation goes through its
methods. A running task accrues wall-clock at rate 1/(1+load_factor) per
virtual second and completes when accrued time reaches its hidden
``true_runtime`` (a scenario input never exposed through the public views).
"""

from __future__ import annotations

import heapq
import io
import csv
from bisect import insort
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .core import Task, TaskState, TERMINAL_STATES, transition
from .errors import (
    ClockRegression,
    DuplicateTask,
    IllegalTransition,
    NoLink,
    SiteDown,
    UnknownSite,
    UnknownTask,
)


@dataclass
class SiteState:
    site_id: str
    cpu_slots: int
    load_factor: float = 0.0
    queue: list[str] = field(default_factory=list)
    running: set[str] = field(default_factory=set)
    alive: bool = True
    cost_rate: float = 1.0
    heartbeat_interval: float = 1.0

    def __post_init__(self):
        if self.cpu_slots < 1:
            raise ValueError("cpu_slots must be >= 1")
        if self.load_factor < 0:
            raise ValueError("load_factor must be >= 0")


@dataclass(frozen=True)
class LinkBandwidth:
    from_site: str
    to_site: str
    bandwidth: float  # bytes/second

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")


@dataclass(frozen=True)
class StatusChange:
    at: float
    task_id: str
    old_status: str
    new_status: str
    site_id: Optional[str]


class SimFabric:
    def __init__(self):
        self.clock: float = 0.0
        self.sites: dict[str, SiteState] = {}
        self.links: dict[tuple[str, str], LinkBandwidth] = {}
        self.tasks: dict[str, Task] = {}
        self._true_runtime: dict[str, float] = {}
        self._output_bytes: dict[str, int] = {}
        self._heap: list = []  # (at, seq, kind, payload)
        self._seq = 0
        self._gen: dict[str, int] = {}  # completion-event generation per task
        self._accrue_from: dict[str, float] = {}
        self.last_heartbeat: dict[str, float] = {}
        self.event_log: list[tuple[float, str, str, str, str]] = []
        self.status_log: list[StatusChange] = []

    # ------------------------------------------------------------------ setup

    def register_site(self, site: SiteState) -> None:
        if site.site_id in self.sites:
            raise ValueError(f"site {site.site_id!r} already registered")
        self.sites[site.site_id] = site
        if site.alive:
            self._push(self.clock + site.heartbeat_interval, "heartbeat", {"site": site.site_id})

    def register_link(self, link: LinkBandwidth) -> None:
        self.links[(link.from_site, link.to_site)] = link

    def register_task(self, task: Task, true_runtime: float, output_bytes: int = 0) -> None:
        """Install a task and its hidden simulation parameters."""
        if task.task_id in self.tasks:
            raise DuplicateTask(task.task_id)
        if true_runtime <= 0:
            raise ValueError("true_runtime must be > 0")
        self.tasks[task.task_id] = task
        self._true_runtime[task.task_id] = true_runtime
        self._output_bytes[task.task_id] = output_bytes

    def clone_hidden(self, source_task_id: str, new_task_id: str) -> None:
        """Share the hidden runtime of an existing task with a clone (dual-run mode)."""
        self._true_runtime[new_task_id] = self._true_runtime[source_task_id]
        self._output_bytes[new_task_id] = self._output_bytes.get(source_task_id, 0)

    def schedule_load_change(self, site_id: str, at: float, load_factor: float) -> None:
        self._push(at, "load_change", {"site": site_id, "load": load_factor})

    def schedule_site_fail(self, site_id: str, at: float) -> None:
        self._push(at, "site_fail", {"site": site_id})

    def schedule_site_recover(self, site_id: str, at: float) -> None:
        self._push(at, "site_recover", {"site": site_id})

    def schedule_submit(self, site_id: str, task_id: str, at: float) -> None:
        self._push(at, "task_submit", {"site": site_id, "task": task_id})

    def schedule_task_fail(self, task_id: str, at: float) -> None:
        self._push(at, "task_fail", {"task": task_id})

    # --------------------------------------------------------------- plumbing

    def _push(self, at: float, kind: str, payload: dict) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, kind, payload))

    def _log(self, kind: str, task: str = "", site: str = "", detail: str = "") -> None:
        self.event_log.append((self.clock, kind, task, site, detail))

    def _site(self, site_id: str) -> SiteState:
        try:
            return self.sites[site_id]
        except KeyError:
            raise UnknownSite(site_id) from None

    def _task(self, task_id: str) -> Task:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTask(task_id) from None

    def _transition(self, task: Task, to: TaskState) -> None:
        old = task.state
        transition(task, to, self.clock)
        self.status_log.append(StatusChange(self.clock, task.task_id, old.value, to.value, task.assigned_site))
        self._log("status", task.task_id, task.assigned_site or "", f"{old.value}->{to.value}")

    def _queue_key(self, task_id: str):
        t = self.tasks[task_id]
        return (-t.attributes.priority, t.submit_time if t.submit_time is not None else 0.0, t.task_id)

    def _insert_queued(self, site: SiteState, task_id: str) -> int:
        keys = [self._queue_key(tid) for tid in site.queue]
        key = self._queue_key(task_id)
        lo = 0
        while lo < len(keys) and keys[lo] <= key:
            lo += 1
        site.queue.insert(lo, task_id)
        return lo

    def _accrue_task(self, task_id: str, now: float) -> None:
        t0 = self._accrue_from.get(task_id)
        if t0 is None:
            return
        task = self.tasks[task_id]
        site = self.sites[task.assigned_site]
        task.wall_clock_accumulated += (now - t0) / (1.0 + site.load_factor)
        self._accrue_from[task_id] = now

    def _schedule_completion(self, task_id: str) -> None:
        task = self.tasks[task_id]
        site = self.sites[task.assigned_site]
        remaining = self._true_runtime[task_id] - task.wall_clock_accumulated
        self._gen[task_id] = self._gen.get(task_id, 0) + 1
        at = self.clock + max(0.0, remaining) * (1.0 + site.load_factor)
        self._push(at, "task_complete", {"task": task_id, "gen": self._gen[task_id]})

    def _invalidate_completion(self, task_id: str) -> None:
        self._gen[task_id] = self._gen.get(task_id, 0) + 1

    def _promote(self, site: SiteState) -> None:
        # Work conservation: start queued heads whenever slots are free.
        while site.alive and site.queue and len(site.running) < site.cpu_slots:
            tid = site.queue.pop(0)
            task = self.tasks[tid]
            self._transition(task, TaskState.RUNNING)
            site.running.add(tid)
            self._accrue_from[tid] = self.clock
            self._schedule_completion(tid)

    def _release_slot(self, site: SiteState, task_id: str) -> None:
        site.running.discard(task_id)
        self._accrue_from.pop(task_id, None)
        self._invalidate_completion(task_id)
        self._promote(site)

    # ------------------------------------------------------------- operations

    def enqueue(self, site_id: str, task: Task) -> int:
        site = self._site(site_id)
        if not site.alive:
            raise SiteDown(site_id)
        if task.assigned_site is not None and not task.terminal:
            raise DuplicateTask(task.task_id)
        if task.state is not TaskState.QUEUED:
            raise IllegalTransition(task.state.value, TaskState.QUEUED.value, "enqueue requires QUEUED")
        if task.task_id not in self.tasks:
            raise UnknownTask(task.task_id)
        task.assigned_site = site_id
        if task.submit_time is None:
            task.submit_time = self.clock
        pos = self._insert_queued(site, task.task_id)
        self._log("enqueue", task.task_id, site_id, f"pos={pos}")
        self._promote(site)
        return pos

    def advance(self, until: float) -> list[StatusChange]:
        if until < self.clock:
            raise ClockRegression(f"advance to {until} before current clock {self.clock}")
        mark = len(self.status_log)
        while self._heap and self._heap[0][0] <= until:
            at, _, kind, payload = heapq.heappop(self._heap)
            self.clock = at
            self._dispatch(kind, payload)
        self.clock = until
        for tid in list(self._accrue_from):
            self._accrue_task(tid, until)
        return self.status_log[mark:]

    def _dispatch(self, kind: str, payload: dict) -> None:
        if kind == "task_complete":
            tid = payload["task"]
            if self._gen.get(tid) != payload["gen"]:
                return  # stale completion, superseded by pause/move/load change
            task = self.tasks[tid]
            site = self.sites[task.assigned_site]
            task.wall_clock_accumulated = self._true_runtime[tid]
            self._accrue_from.pop(tid, None)
            self._transition(task, TaskState.COMPLETED)
            self._log("task_complete", tid, site.site_id)
            site.running.discard(tid)
            self._promote(site)
        elif kind == "heartbeat":
            site = self.sites[payload["site"]]
            if not site.alive:
                return
            self.last_heartbeat[site.site_id] = self.clock
            self._log("heartbeat", "", site.site_id)
            self._push(self.clock + site.heartbeat_interval, "heartbeat", {"site": site.site_id})
        elif kind == "load_change":
            site = self.sites[payload["site"]]
            for tid in list(site.running):
                self._accrue_task(tid, self.clock)
            site.load_factor = payload["load"]
            self._log("load_change", "", site.site_id, f"load={site.load_factor}")
            if site.alive:
                for tid in list(site.running):
                    self._schedule_completion(tid)
        elif kind == "site_fail":
            self.fail_site(payload["site"])
        elif kind == "site_recover":
            self.recover_site(payload["site"])
        elif kind == "task_submit":
            task = self.tasks[payload["task"]]
            if task.state is TaskState.PLANNED:
                self._transition(task, TaskState.QUEUED)
                self.enqueue(payload["site"], task)
        elif kind == "task_fail":
            self.fail_task(payload["task"])
        elif kind == "transfer_complete":
            self._log(
                "transfer_complete",
                payload.get("task", ""),
                payload["to"],
                f"from={payload['from']} bytes={payload['bytes']}",
            )
            cb = payload.get("callback")
            if cb is not None:
                cb(self.clock)

    def control(self, site_id: str, task_id: str, action: str, priority: Optional[int] = None) -> Task:
        site = self._site(site_id)
        if not site.alive:
            raise SiteDown(site_id)
        task = self._task(task_id)
        if task.assigned_site != site_id:
            raise UnknownTask(f"{task_id} not resident at {site_id}")
        if action == "pause":
            if task.state is not TaskState.RUNNING:
                raise IllegalTransition(task.state.value, TaskState.PAUSED.value)
            self._accrue_task(task_id, self.clock)
            self._transition(task, TaskState.PAUSED)
            self._release_slot(site, task_id)
        elif action == "resume":
            if task.state is not TaskState.PAUSED:
                raise IllegalTransition(task.state.value, TaskState.RUNNING.value)
            if len(site.running) >= site.cpu_slots:
                raise IllegalTransition(task.state.value, TaskState.RUNNING.value, "no free slot")
            self._transition(task, TaskState.RUNNING)
            site.running.add(task_id)
            self._accrue_from[task_id] = self.clock
            self._schedule_completion(task_id)
        elif action == "kill":
            if task.state in TERMINAL_STATES:
                raise IllegalTransition(task.state.value, TaskState.KILLED.value)
            if task_id in site.running:
                self._accrue_task(task_id, self.clock)
            self._transition(task, TaskState.KILLED)
            if task_id in site.queue:
                site.queue.remove(task_id)
            self._release_slot(site, task_id)
        elif action == "set_priority":
            if priority is None:
                raise ValueError("set_priority requires a priority")
            task.attributes = replace(task.attributes, priority=priority)
            if task_id in site.queue:
                site.queue.remove(task_id)
                self._insert_queued(site, task_id)
            self._log("set_priority", task_id, site_id, f"priority={priority}")
        else:
            raise ValueError(f"unknown control action {action!r}")
        return task

    def extract_task(self, site_id: str, task_id: str):
        """Remove a task from its site for migration. Returns (task, checkpoint, local_files)."""
        site = self._site(site_id)
        if not site.alive:
            raise SiteDown(site_id)
        task = self._task(task_id)
        if task.assigned_site != site_id:
            raise UnknownTask(f"{task_id} not resident at {site_id}")
        if task.state not in (TaskState.QUEUED, TaskState.RUNNING, TaskState.PAUSED, TaskState.FAILED):
            raise IllegalTransition(task.state.value, TaskState.MOVING.value)
        if task_id in site.running:
            self._accrue_task(task_id, self.clock)
        if task_id in site.queue:
            site.queue.remove(task_id)
        self._release_slot(site, task_id)
        if task.state is not TaskState.FAILED:
            self._transition(task, TaskState.MOVING)
        started = task.start_time is not None
        checkpoint = task.wall_clock_accumulated if (task.checkpointable and started) else None
        local_files = self.local_files(task_id)
        task.assigned_site = None
        self._log("extract", task_id, site_id, f"checkpoint={checkpoint}")
        if not task.checkpointable:
            task.wall_clock_accumulated = 0.0
        return task, checkpoint, local_files

    def evacuate(self, site_id: str) -> list[Task]:
        """Admin reclaim of all non-terminal tasks from a dead site (no checkpoint survives)."""
        site = self._site(site_id)
        if site.alive:
            raise ValueError(f"site {site_id!r} is alive; use extract_task")
        out = []
        resident = list(site.queue) + sorted(site.running)
        resident += sorted(
            t.task_id for t in self.tasks.values()
            if t.assigned_site == site_id and t.task_id not in resident
        )
        for tid in resident:
            task = self.tasks[tid]
            if task.terminal:
                continue
            if tid in site.queue:
                site.queue.remove(tid)
            site.running.discard(tid)
            self._accrue_from.pop(tid, None)
            self._invalidate_completion(tid)
            self._transition(task, TaskState.MOVING)
            task.assigned_site = None
            task.wall_clock_accumulated = 0.0  # checkpoint unreachable on a dead site
            out.append(task)
        self._log("evacuate", "", site_id, f"count={len(out)}")
        return out

    def local_files(self, task_id: str) -> list[tuple[str, int]]:
        task = self._task(task_id)
        nbytes = self._output_bytes.get(task_id, 0)
        if task.start_time is None or nbytes <= 0:
            return []
        return [(f"{task_id}.out", nbytes)]

    def transfer(self, from_site: str, to_site: str, nbytes: float, callback: Optional[Callable] = None,
                 task_id: str = "") -> float:
        if nbytes < 0:
            raise ValueError("bytes must be >= 0")
        link = self.links.get((from_site, to_site))
        if link is None:
            raise NoLink(f"{from_site} -> {to_site}")
        at = self.clock + nbytes / link.bandwidth
        self._push(at, "transfer_complete",
                   {"from": from_site, "to": to_site, "bytes": nbytes, "callback": callback, "task": task_id})
        return at

    def fail_task(self, task_id: str) -> None:
        """Fault injection: a running task dies on an otherwise healthy site."""
        task = self._task(task_id)
        if task.state is not TaskState.RUNNING:
            return
        site = self.sites[task.assigned_site]
        self._accrue_task(task_id, self.clock)
        self._transition(task, TaskState.FAILED)
        self._log("task_fail", task_id, site.site_id)
        self._release_slot(site, task_id)

    def fail_site(self, site_id: str) -> None:
        site = self._site(site_id)
        if not site.alive:
            return  # idempotent
        for tid in list(site.running):
            self._accrue_task(tid, self.clock)
            self._accrue_from.pop(tid, None)
            self._invalidate_completion(tid)
        site.alive = False
        self._log("site_fail", "", site_id)

    def recover_site(self, site_id: str) -> None:
        site = self._site(site_id)
        if site.alive:
            return
        site.alive = True
        self._log("site_recover", "", site_id)
        self._push(self.clock + site.heartbeat_interval, "heartbeat", {"site": site.site_id})
        # Resident tasks keep their pre-failure states (the fabric does not
        # re-place anything), but running ones resume accruing.
        for tid in sorted(site.running):
            if self.tasks[tid].state is TaskState.RUNNING:
                self._accrue_from[tid] = self.clock
                self._schedule_completion(tid)

    # ---------------------------------------------------------------- views

    def site_view(self, site_id: str) -> dict:
        site = self._site(site_id)
        return {
            "site_id": site.site_id,
            "cpu_slots": site.cpu_slots,
            "load_factor": site.load_factor,
            "queue": list(site.queue),
            "running": sorted(site.running),
            "alive": site.alive,
            "cost_rate": site.cost_rate,
            "heartbeat_interval": site.heartbeat_interval,
        }

    def resident_site(self, task_id: str) -> Optional[str]:
        task = self.tasks.get(task_id)
        if task is None or task.terminal:
            return None
        return task.assigned_site

    def queue_position(self, task_id: str) -> Optional[int]:
        task = self._task(task_id)
        if task.state is not TaskState.QUEUED or task.assigned_site is None:
            return None
        site = self.sites.get(task.assigned_site)
        if site is None or task_id not in site.queue:
            return None
        return site.queue.index(task_id)

    def alive_sites(self) -> list[str]:
        return sorted(s.site_id for s in self.sites.values() if s.alive)

    def event_log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "kind", "task", "site", "detail"])
        for row in self.event_log:
            w.writerow([repr(row[0]), row[1], row[2], row[3], row[4]])
        return buf.getvalue()
