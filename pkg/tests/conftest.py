import math
import sys

import pytest

from gridhelm.core import Estimate, EstimateKind, EstimateMethod, Task, TaskAttributes, TaskState
from gridhelm.fabric import LinkBandwidth, SimFabric, SiteState


def make_attrs(**kw) -> TaskAttributes:
    kw.setdefault("user", "alice")
    return TaskAttributes(**kw)


def make_task(task_id, state=TaskState.PLANNED, checkpointable=False, **attr_kw) -> Task:
    return Task(task_id=task_id, attributes=make_attrs(**attr_kw),
                state=state, checkpointable=checkpointable)


def runtime_estimate(value, n=1) -> Estimate:
    return Estimate(kind=EstimateKind.RUNTIME, value=value,
                    method=EstimateMethod.MEAN, sample_count=n)


@pytest.fixture
def fabric() -> SimFabric:
    fab = SimFabric()
    fab.register_site(SiteState(site_id="A", cpu_slots=1, load_factor=0.0))
    fab.register_site(SiteState(site_id="B", cpu_slots=1, load_factor=1.0, cost_rate=2.0))
    fab.register_link(LinkBandwidth("A", "B", 10_000_000))
    fab.register_link(LinkBandwidth("B", "A", 10_000_000))
    return fab


def submit(fab: SimFabric, task: Task, site: str, true_runtime=100.0, output_bytes=0) -> Task:
    """Register and enqueue a task directly at the current clock."""
    from gridhelm.core import transition

    fab.register_task(task, true_runtime, output_bytes)
    if task.state is TaskState.PLANNED:
        transition(task, TaskState.QUEUED, fab.clock)
    fab.enqueue(site, task)
    return task


def install_queue_state(fab: SimFabric, site_id: str, queued, running):
    """Force an arbitrary queue/running configuration for oracle tests.

    ``queued``/``running``: lists of (task, accrued) pairs. Bypasses the
    work-conserving promotion on purpose.
    """
    site = fab.sites[site_id]
    for task, accrued in queued:
        if task.task_id not in fab.tasks:
            fab.register_task(task, 1e9)
        task.state = TaskState.QUEUED
        task.assigned_site = site_id
        task.wall_clock_accumulated = accrued
        site.queue.append(task.task_id)
    site.queue.sort(key=fab._queue_key)
    for task, accrued in running:
        if task.task_id not in fab.tasks:
            fab.register_task(task, 1e9)
        task.state = TaskState.RUNNING
        task.assigned_site = site_id
        if task.start_time is None:
            task.start_time = fab.clock
        task.wall_clock_accumulated = accrued
        site.running.add(task.task_id)
