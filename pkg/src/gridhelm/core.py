"""Domain types and the task/job state machine shared by every service.

All types here are plain values; mutation happens inside the owning modules
(fabric, steering). ``to_doc`` gives the canonical key-value serialization
used on the wire and in the persistence logs.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import EmptyList, IllegalTransition, ZeroActualRuntime


class TaskState(str, enum.Enum):
    PLANNED = "PLANNED"
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    PAUSED = "PAUSED"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    KILLED = "KILLED"
    MOVING = "MOVING"


TERMINAL_STATES = frozenset({TaskState.COMPLETED, TaskState.FAILED, TaskState.KILLED})

# Legal edges of the lifecycle. KILLED is reachable from every non-terminal state.
_ALLOWED: dict[TaskState, frozenset[TaskState]] = {
    TaskState.PLANNED: frozenset({TaskState.QUEUED, TaskState.KILLED}),
    TaskState.QUEUED: frozenset({TaskState.RUNNING, TaskState.MOVING, TaskState.KILLED}),
    TaskState.RUNNING: frozenset(
        {TaskState.COMPLETED, TaskState.FAILED, TaskState.KILLED, TaskState.PAUSED, TaskState.MOVING}
    ),
    TaskState.PAUSED: frozenset({TaskState.RUNNING, TaskState.MOVING, TaskState.KILLED}),
    TaskState.MOVING: frozenset({TaskState.QUEUED, TaskState.KILLED}),
    TaskState.COMPLETED: frozenset(),
    TaskState.FAILED: frozenset(),
    TaskState.KILLED: frozenset(),
}


class JobType(str, enum.Enum):
    BATCH = "batch"
    INTERACTIVE = "interactive"


class EstimateKind(str, enum.Enum):
    RUNTIME = "runtime"
    QUEUE = "queue"
    TRANSFER = "transfer"


class EstimateMethod(str, enum.Enum):
    MEAN = "mean"
    LINEAR_REGRESSION = "linear_regression"
    EXACT_SUM = "exact_sum"
    BANDWIDTH_MODEL = "bandwidth_model"
    NONE = "none"


@dataclass(frozen=True)
class TaskAttributes:
    """Submission-time attributes of a task; the similarity key for prediction."""

    user: str
    account: str = ""
    queue_name: str = "default"
    partition: str = ""
    job_type: JobType = JobType.BATCH
    nodes: int = 1
    requested_cpu_hours: float = 0.0
    input_files: tuple[tuple[str, int], ...] = ()
    priority: int = 0

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("nodes must be >= 1")
        if self.requested_cpu_hours < 0:
            raise ValueError("requested_cpu_hours must be >= 0")
        for name, size in self.input_files:
            if size < 0:
                raise ValueError(f"input file {name!r} has negative size")


@dataclass
class Estimate:
    kind: EstimateKind
    value: float
    method: EstimateMethod
    sample_count: int = 0
    template_rank: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("estimate value must be >= 0")
        if self.method is EstimateMethod.NONE and self.sample_count != 0:
            raise ValueError("method=none requires sample_count=0")


@dataclass
class Task:
    task_id: str
    attributes: TaskAttributes
    state: TaskState = TaskState.PLANNED
    submit_time: Optional[float] = None
    start_time: Optional[float] = None
    completion_time: Optional[float] = None
    wall_clock_accumulated: float = 0.0
    assigned_site: Optional[str] = None
    submitted_estimate: Optional[Estimate] = None
    checkpointable: bool = False
    job_id: Optional[str] = None

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


@dataclass
class Job:
    job_id: str
    owner: str
    tasks: dict[str, Task] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)  # (before, after) precedence

    def __post_init__(self):
        if _has_cycle(set(self.tasks), self.edges):
            raise ValueError(f"job {self.job_id!r} task graph is cyclic")

    @property
    def overall_state(self) -> TaskState:
        return derive_overall_state(self.tasks.values())


@dataclass
class ConcretePlan:
    job_id: str
    assignments: dict[str, str]  # task_id -> site_id
    created_by: str
    plan_time: float


@dataclass
class EstimateEvaluation:
    actual_runtime: float
    estimated_runtime: float
    percentage_error: float

    @classmethod
    def of(cls, actual: float, estimated: float) -> "EstimateEvaluation":
        return cls(actual, estimated, percentage_error(actual, estimated))


def _has_cycle(nodes: set[str], edges: list[tuple[str, str]]) -> bool:
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        indeg[b] = indeg.get(b, 0) + 1
        indeg.setdefault(a, 0)
    stack = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        for m in adj.get(n, ()):
            indeg[m] -= 1
            if indeg[m] == 0:
                stack.append(m)
    return seen != len(indeg)


def transition(task: Task, to: TaskState, now: float) -> Task:
    """Apply one state-machine edge, stamping timestamps. Mutates and returns ``task``."""
    if to not in _ALLOWED[task.state]:
        raise IllegalTransition(task.state.value, to.value)
    if to is TaskState.QUEUED and task.submit_time is None:
        task.submit_time = now
    if to is TaskState.RUNNING and task.start_time is None:
        task.start_time = now
    if to in TERMINAL_STATES:
        task.completion_time = now
    task.state = to
    return task


def derive_overall_state(tasks: Iterable[Task]) -> TaskState:
    """Pure derivation of a job's state from its tasks' states."""
    states = [t.state for t in tasks]
    if not states:
        return TaskState.PLANNED
    if all(s is TaskState.COMPLETED for s in states):
        return TaskState.COMPLETED
    if any(s is TaskState.FAILED for s in states) and not any(s is TaskState.RUNNING for s in states):
        return TaskState.FAILED
    if any(s is TaskState.KILLED for s in states) and not any(
        s in (TaskState.RUNNING, TaskState.QUEUED, TaskState.PAUSED, TaskState.MOVING) for s in states
    ):
        return TaskState.KILLED
    if any(s is TaskState.RUNNING for s in states):
        return TaskState.RUNNING
    if any(s is TaskState.MOVING for s in states):
        return TaskState.MOVING
    if any(s in (TaskState.QUEUED, TaskState.PAUSED) for s in states):
        return TaskState.QUEUED
    return TaskState.PLANNED


def percentage_error(actual: float, estimated: float) -> float:
    """(actual - estimated) / actual * 100; negative means over-estimate."""
    if actual <= 0:
        raise ZeroActualRuntime(f"actual runtime must be > 0, got {actual}")
    return (actual - estimated) / actual * 100.0


def signed_mean_error(evals: list[EstimateEvaluation]) -> float:
    if not evals:
        raise EmptyList("no evaluations")
    return sum(e.percentage_error for e in evals) / len(evals)


def mean_absolute_percentage_error(evals: list[EstimateEvaluation]) -> float:
    if not evals:
        raise EmptyList("no evaluations")
    return sum(abs(e.percentage_error) for e in evals) / len(evals)


def to_doc(obj):
    """Canonical key-value document for any core value type (field names as declared)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_doc(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: to_doc(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_doc(v) for v in obj]
    return obj


def estimate_from_doc(doc: Optional[dict]) -> Optional[Estimate]:
    if doc is None:
        return None
    return Estimate(
        kind=EstimateKind(doc["kind"]),
        value=float(doc["value"]),
        method=EstimateMethod(doc["method"]),
        sample_count=int(doc["sample_count"]),
        template_rank=int(doc["template_rank"]),
    )


def attributes_from_doc(doc: dict) -> TaskAttributes:
    return TaskAttributes(
        user=doc["user"],
        account=doc.get("account", ""),
        queue_name=doc.get("queue_name", "default"),
        partition=doc.get("partition", ""),
        job_type=JobType(doc.get("job_type", "batch")),
        nodes=int(doc.get("nodes", 1)),
        requested_cpu_hours=float(doc.get("requested_cpu_hours", 0.0)),
        input_files=tuple((n, int(s)) for n, s in doc.get("input_files", ())),
        priority=int(doc.get("priority", 0)),
    )
