"""Job Monitoring Service: a collector that polls the fabric, a store-first
query path for terminal tasks, and a sequenced broadcast event feed.

Event feed semantics: every status change observed in the fabric log is
published exactly once, with a strictly increasing ``seq``. Subscribers
replay from any seq still inside the retention window; older positions get
``SeqExpired`` and must re-query snapshots.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import TaskState, TERMINAL_STATES, to_doc
from .errors import FabricUnreachable, SeqExpired, UnknownTask
from .history import HistoryStore

RETENTION = 10_000


@dataclass(frozen=True)
class MonitoringEvent:
    seq: int
    at: float
    task_id: str
    old_status: str
    new_status: str
    site_id: Optional[str]
    kind: str = "status_change"  # status_change | unreachable | reachable

    def __post_init__(self):
        if self.kind == "status_change" and self.old_status == self.new_status:
            raise ValueError("status_change requires old_status != new_status")


@dataclass
class MonitoringRecord:
    task_id: str
    job_id: Optional[str]
    status: str
    remaining_time: Optional[float]
    elapsed_time: float
    estimated_run_time: Optional[float]
    queue_position: Optional[int]
    priority: int
    submission_time: Optional[float]
    execution_time: Optional[float]
    completion_time: Optional[float]
    cpu_time_used: float
    input_io_bytes: int
    output_io_bytes: int
    owner: str
    environment: dict


class MonitoringService:
    def __init__(self, fabric, store: HistoryStore, estimator=None):
        self.fabric = fabric
        self.store = store
        self.estimator = estimator  # callable(attrs) -> Estimate, used by refresh=True
        self.fabric_reachable = True
        self._log_cursor = 0
        self._feed: deque[MonitoringEvent] = deque()
        self._next_seq = 1
        self._terminal: dict[str, dict] = {}
        self._cache: dict[str, MonitoringRecord] = {}
        self._site_alive_seen: dict[str, bool] = {}
        self.collector_calls: dict[str, int] = {}
        self._monitoring_log = (
            store.directory / "monitoring.log" if store.directory else None
        )
        if self._monitoring_log and self._monitoring_log.exists():
            for line in self._monitoring_log.read_text().splitlines():
                doc = json.loads(line)
                self._terminal[doc["task_id"]] = doc

    # ---------------------------------------------------------------- feed

    def _publish(self, event_fields: dict) -> MonitoringEvent:
        ev = MonitoringEvent(seq=self._next_seq, **event_fields)
        self._next_seq += 1
        self._feed.append(ev)
        while len(self._feed) > RETENTION:
            self._feed.popleft()
        return ev

    def subscribe(self, from_seq: int) -> list[MonitoringEvent]:
        if from_seq < 0:
            raise ValueError("from_seq must be >= 0")
        if self._feed:
            oldest = self._feed[0].seq
            if from_seq + 1 < oldest:
                raise SeqExpired(f"seq {from_seq} is before the retention window (oldest {oldest})")
            return [ev for ev in self._feed if ev.seq > from_seq]
        if from_seq + 1 < self._next_seq:
            raise SeqExpired(f"seq {from_seq} is before the retention window")
        return []

    @property
    def next_seq(self) -> int:
        return self._next_seq

    # ----------------------------------------------------------- collector

    def collector_sync(self) -> int:
        """Diff fabric state since last sync; persist terminal transitions and
        publish one event per status change. Returns count of store writes."""
        if not self.fabric_reachable:
            raise FabricUnreachable("collector cannot reach the fabric")
        writes = 0
        log = self.fabric.status_log
        while self._log_cursor < len(log):
            ch = log[self._log_cursor]
            self._log_cursor += 1
            self._publish(
                dict(at=ch.at, task_id=ch.task_id, old_status=ch.old_status,
                     new_status=ch.new_status, site_id=ch.site_id)
            )
            if ch.new_status in (s.value for s in TERMINAL_STATES):
                rec = self._collect(ch.task_id)
                doc = to_doc(rec)
                self._terminal[ch.task_id] = doc
                if self._monitoring_log:
                    with self._monitoring_log.open("a") as fh:
                        fh.write(json.dumps(doc, sort_keys=True) + "\n")
                writes += 1
        # Reachability events: statuses are preserved, never forged to FAILED.
        for site_id, site in self.fabric.sites.items():
            seen = self._site_alive_seen.get(site_id, True)
            if seen and not site.alive:
                for tid in list(site.queue) + sorted(site.running):
                    task = self.fabric.tasks[tid]
                    if not task.terminal:
                        self._publish(
                            dict(at=self.fabric.clock, task_id=tid, old_status=task.state.value,
                                 new_status=task.state.value, site_id=site_id, kind="unreachable")
                        )
            elif not seen and site.alive:
                self._publish(
                    dict(at=self.fabric.clock, task_id="", old_status="", new_status="",
                         site_id=site_id, kind="reachable")
                )
            self._site_alive_seen[site_id] = site.alive
        return writes

    def _collect(self, task_id: str) -> MonitoringRecord:
        self.collector_calls[task_id] = self.collector_calls.get(task_id, 0) + 1
        task = self.fabric.tasks.get(task_id)
        if task is None:
            raise UnknownTask(task_id)
        est = self.store.lookup_estimate(task_id) or task.submitted_estimate
        est_value = est.value if est else None
        elapsed = task.wall_clock_accumulated
        remaining = max(0.0, est_value - elapsed) if est_value is not None else None
        in_bytes = sum(s for _, s in task.attributes.input_files)
        out_bytes = sum(s for _, s in self.fabric.local_files(task_id))
        return MonitoringRecord(
            task_id=task.task_id,
            job_id=task.job_id,
            status=task.state.value,
            remaining_time=remaining,
            elapsed_time=elapsed,
            estimated_run_time=est_value,
            queue_position=self.fabric.queue_position(task_id),
            priority=task.attributes.priority,
            submission_time=task.submit_time,
            execution_time=task.start_time,
            completion_time=task.completion_time,
            cpu_time_used=elapsed,
            input_io_bytes=in_bytes,
            output_io_bytes=out_bytes,
            owner=task.attributes.user,
            environment={"site": task.assigned_site or "", "queue": task.attributes.queue_name},
        )

    # --------------------------------------------------------------- queries

    def query(self, task_id: str, refresh: bool = False) -> MonitoringRecord:
        """Store-first lookup: terminal tasks come from the store, live tasks
        from the collector. ``refresh=True`` recomputes the runtime estimate."""
        doc = self._terminal.get(task_id)
        if doc is not None:
            return MonitoringRecord(**doc)
        if not self.fabric_reachable:
            cached = self._cache.get(task_id)
            if cached is not None:
                return cached
            raise FabricUnreachable(f"no cached record for {task_id!r}")
        rec = self._collect(task_id)
        if refresh and self.estimator is not None:
            est = self.estimator(self.fabric.tasks[task_id].attributes)
            rec.estimated_run_time = est.value
            rec.remaining_time = max(0.0, est.value - rec.elapsed_time)
        self._cache[task_id] = rec
        return rec

    def list_records(self) -> list[MonitoringRecord]:
        out = []
        for task_id in sorted(self.fabric.tasks):
            try:
                out.append(self.query(task_id))
            except FabricUnreachable:
                continue
        return out
