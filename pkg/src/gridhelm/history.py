"""Accounting-trace history store: trace ingest, similarity queries, and the
submitted-estimate database backing the queue-time estimator.

Persistence is an append-only pair of line-delimited JSON logs
(``history.log``, ``estimates.log``) with the in-memory index rebuilt on
startup. Trace CSV schema (header required)::

    account,user,partition,nodes,job_type,status,requested_cpu_hours,
    queue,cpu_charge_rate,idle_charge_rate,submit,start,complete
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import Estimate, JobType, TaskAttributes, attributes_from_doc, estimate_from_doc, to_doc
from .errors import UnreadableSource

log = logging.getLogger(__name__)

TRACE_FIELDS = [
    "account", "user", "partition", "nodes", "job_type", "status",
    "requested_cpu_hours", "queue", "cpu_charge_rate", "idle_charge_rate",
    "submit", "start", "complete",
]

# Similarity templates, most specific first. Rank 3 is the global template.
TEMPLATE_FIELDS: list[tuple[str, ...]] = [
    ("user", "queue_name", "job_type", "nodes"),
    ("user", "queue_name"),
    ("queue_name",),
    (),
]


@dataclass
class TaskHistoryRecord:
    attributes: TaskAttributes
    actual_runtime: float
    status: str  # "successful" | "failed"
    submit_time: float
    start_time: float
    completion_time: float

    def __post_init__(self):
        if self.status not in ("successful", "failed"):
            raise ValueError(f"bad status {self.status!r}")
        if not (self.submit_time <= self.start_time <= self.completion_time):
            raise ValueError("timestamps must satisfy submit <= start <= complete")
        if self.status == "successful" and self.actual_runtime <= 0:
            raise ValueError("actual_runtime must be > 0 for successful records")


def record_from_trace_row(row: dict) -> TaskHistoryRecord:
    attrs = TaskAttributes(
        user=row["user"],
        account=row["account"],
        queue_name=row["queue"],
        partition=row["partition"],
        job_type=JobType(row["job_type"]),
        nodes=int(row["nodes"]),
        requested_cpu_hours=float(row["requested_cpu_hours"]),
    )
    submit, start, complete = float(row["submit"]), float(row["start"]), float(row["complete"])
    return TaskHistoryRecord(
        attributes=attrs,
        actual_runtime=complete - start,
        status="successful" if row["status"] in ("successful", "1", "ok") else "failed",
        submit_time=submit,
        start_time=start,
        completion_time=complete,
    )


def template_key(attrs: TaskAttributes, rank: int) -> tuple:
    return tuple(getattr(attrs, f) for f in TEMPLATE_FIELDS[rank])


class HistoryStore:
    """Single-writer store of task histories and submitted estimates."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = Path(directory) if directory else None
        self.records: list[TaskHistoryRecord] = []
        self.estimates: dict[str, Estimate] = {}
        self._ingested_hashes: set[str] = set()
        self.last_skipped: list[tuple[int, str]] = []
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._replay()

    # ---------------------------------------------------------- persistence

    @property
    def _history_path(self) -> Optional[Path]:
        return self.directory / "history.log" if self.directory else None

    @property
    def _estimates_path(self) -> Optional[Path]:
        return self.directory / "estimates.log" if self.directory else None

    def _replay(self):
        if self._history_path and self._history_path.exists():
            for line in self._history_path.read_text().splitlines():
                doc = json.loads(line)
                if doc.get("_kind") == "ingest":
                    self._ingested_hashes.add(doc["content_hash"])
                    continue
                self.records.append(
                    TaskHistoryRecord(
                        attributes=attributes_from_doc(doc["attributes"]),
                        actual_runtime=doc["actual_runtime"],
                        status=doc["status"],
                        submit_time=doc["submit_time"],
                        start_time=doc["start_time"],
                        completion_time=doc["completion_time"],
                    )
                )
        if self._estimates_path and self._estimates_path.exists():
            for line in self._estimates_path.read_text().splitlines():
                doc = json.loads(line)
                self.estimates[doc["task_id"]] = estimate_from_doc(doc["estimate"])

    def _append(self, path: Optional[Path], doc: dict):
        if path:
            with path.open("a") as fh:
                fh.write(json.dumps(doc, sort_keys=True) + "\n")

    # ------------------------------------------------------------ operations

    def add_record(self, rec: TaskHistoryRecord) -> None:
        self.records.append(rec)
        self._append(self._history_path, to_doc(rec))

    def ingest_trace(self, source) -> int:
        """Load a Paragon-style trace CSV. Returns the count of records loaded;
        malformed rows are skipped and reported via ``last_skipped``."""
        if isinstance(source, (str, Path)):
            try:
                content = Path(source).read_text()
            except OSError as exc:
                raise UnreadableSource(str(exc)) from exc
        else:
            content = source.read()
        content_hash = hashlib.sha256(content.encode()).hexdigest()
        if content_hash in self._ingested_hashes:
            self.last_skipped = []
            return 0
        reader = csv.DictReader(io.StringIO(content))
        if reader.fieldnames is None:
            self.last_skipped = []
            self._ingested_hashes.add(content_hash)
            self._append(self._history_path, {"_kind": "ingest", "content_hash": content_hash})
            return 0
        missing = [f for f in TRACE_FIELDS if f not in reader.fieldnames]
        if missing:
            raise UnreadableSource(f"trace header missing fields: {missing}")
        loaded = 0
        skipped: list[tuple[int, str]] = []
        for lineno, row in enumerate(reader, 2):
            try:
                self.add_record(record_from_trace_row(row))
                loaded += 1
            except (ValueError, KeyError, TypeError) as exc:
                skipped.append((lineno, str(exc)))
                log.warning("trace row %d skipped: %s", lineno, exc)
        self.last_skipped = skipped
        self._ingested_hashes.add(content_hash)
        self._append(self._history_path, {"_kind": "ingest", "content_hash": content_hash})
        return loaded

    def similar_tasks(self, attributes: TaskAttributes, template_rank: int) -> list[TaskHistoryRecord]:
        """Successful records matching the template at ``template_rank``,
        newest completion first."""
        if template_rank not in (0, 1, 2, 3):
            raise ValueError(f"template_rank must be in 0..3, got {template_rank}")
        key = template_key(attributes, template_rank)
        hits = [
            r for r in self.records
            if r.status == "successful" and template_key(r.attributes, template_rank) == key
        ]
        hits.sort(key=lambda r: -r.completion_time)
        return hits

    def record_estimate(self, task_id: str, estimate: Estimate) -> None:
        self.estimates[task_id] = estimate
        self._append(self._estimates_path, {"task_id": task_id, "estimate": to_doc(estimate)})

    def lookup_estimate(self, task_id: str) -> Optional[Estimate]:
        return self.estimates.get(task_id)
