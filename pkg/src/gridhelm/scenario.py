"""Declarative scenario files: one record per line, `kind arg key=value ...`.

Record kinds:
    site <id> slots=N [load=t0:v0,t1:v1,...] [cost=R] [hb=S]
    link <from> <to> <bytes_per_second>
    task <id> user=U [site=S] [queue=Q] [account=A] [partition=P] [type=batch|interactive]
              [nodes=N] [hours=H] [prio=P] [runtime=TRUE_RUNTIME] [ckpt=0|1]
              [submit=T] [files=name:bytes,...] [out=bytes] [job=JOBID]
    fail <site> at=T
    recover <site> at=T
    failtask <task> at=T

`runtime` is the hidden true runtime consumed only by the simulator. Tasks
with `site=` are submitted to that site at their submit time; tasks without
are left PLANNED for the scheduler. Lines starting with `#` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import JobType, Task, TaskAttributes, TaskState
from .errors import UnreadableSource
from .fabric import LinkBandwidth, SimFabric, SiteState


@dataclass
class SiteSpec:
    site_id: str
    cpu_slots: int
    load_timeline: list[tuple[float, float]] = field(default_factory=list)  # (at, load)
    cost_rate: float = 1.0
    heartbeat_interval: float = 1.0


@dataclass
class TaskSpec:
    task_id: str
    attributes: TaskAttributes
    true_runtime: float = 60.0
    checkpointable: bool = False
    submit_time: float = 0.0
    site: Optional[str] = None
    output_bytes: int = 0
    job_id: Optional[str] = None


@dataclass
class Scenario:
    sites: list[SiteSpec] = field(default_factory=list)
    links: list[LinkBandwidth] = field(default_factory=list)
    tasks: list[TaskSpec] = field(default_factory=list)
    site_fails: list[tuple[str, float]] = field(default_factory=list)
    site_recovers: list[tuple[str, float]] = field(default_factory=list)
    task_fails: list[tuple[str, float]] = field(default_factory=list)


class ScenarioParseError(UnreadableSource):
    def __init__(self, lineno: int, line: str, reason: str):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line!r}")


def _kv(parts: list[str], lineno: int, line: str) -> dict[str, str]:
    out = {}
    for p in parts:
        if "=" not in p:
            raise ScenarioParseError(lineno, line, f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = v
    return out


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "site":
                kv = _kv(parts[2:], lineno, line)
                timeline = []
                for step in kv.get("load", "").split(","):
                    if step:
                        t, v = step.split(":")
                        timeline.append((float(t), float(v)))
                sc.sites.append(
                    SiteSpec(
                        site_id=parts[1],
                        cpu_slots=int(kv.get("slots", "1")),
                        load_timeline=timeline,
                        cost_rate=float(kv.get("cost", "1.0")),
                        heartbeat_interval=float(kv.get("hb", "1.0")),
                    )
                )
            elif kind == "link":
                sc.links.append(LinkBandwidth(parts[1], parts[2], float(parts[3])))
            elif kind == "task":
                kv = _kv(parts[2:], lineno, line)
                files = []
                for f in kv.get("files", "").split(","):
                    if f:
                        name, size = f.rsplit(":", 1)
                        files.append((name, int(size)))
                attrs = TaskAttributes(
                    user=kv.get("user", "anon"),
                    account=kv.get("account", ""),
                    queue_name=kv.get("queue", "default"),
                    partition=kv.get("partition", ""),
                    job_type=JobType(kv.get("type", "batch")),
                    nodes=int(kv.get("nodes", "1")),
                    requested_cpu_hours=float(kv.get("hours", "0")),
                    input_files=tuple(files),
                    priority=int(kv.get("prio", "0")),
                )
                sc.tasks.append(
                    TaskSpec(
                        task_id=parts[1],
                        attributes=attrs,
                        true_runtime=float(kv.get("runtime", "60")),
                        checkpointable=kv.get("ckpt", "0") in ("1", "true", "yes"),
                        submit_time=float(kv.get("submit", "0")),
                        site=kv.get("site"),
                        output_bytes=int(kv.get("out", "0")),
                        job_id=kv.get("job"),
                    )
                )
            elif kind == "fail":
                kv = _kv(parts[2:], lineno, line)
                sc.site_fails.append((parts[1], float(kv["at"])))
            elif kind == "recover":
                kv = _kv(parts[2:], lineno, line)
                sc.site_recovers.append((parts[1], float(kv["at"])))
            elif kind == "failtask":
                kv = _kv(parts[2:], lineno, line)
                sc.task_fails.append((parts[1], float(kv["at"])))
            else:
                raise ScenarioParseError(lineno, line, f"unknown record kind {kind!r}")
        except ScenarioParseError:
            raise
        except (ValueError, IndexError) as exc:
            raise ScenarioParseError(lineno, line, str(exc)) from exc
    return sc


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UnreadableSource(str(exc)) from exc
    return parse_scenario(text)


def build_fabric(sc: Scenario) -> SimFabric:
    fab = SimFabric()
    for spec in sc.sites:
        initial = 0.0
        later = []
        for at, v in sorted(spec.load_timeline):
            if at <= 0:
                initial = v
            else:
                later.append((at, v))
        fab.register_site(
            SiteState(
                site_id=spec.site_id,
                cpu_slots=spec.cpu_slots,
                load_factor=initial,
                cost_rate=spec.cost_rate,
                heartbeat_interval=spec.heartbeat_interval,
            )
        )
        for at, v in later:
            fab.schedule_load_change(spec.site_id, at, v)
    for link in sc.links:
        fab.register_link(link)
    for ts in sc.tasks:
        task = Task(
            task_id=ts.task_id,
            attributes=ts.attributes,
            checkpointable=ts.checkpointable,
            job_id=ts.job_id,
        )
        fab.register_task(task, ts.true_runtime, ts.output_bytes)
        if ts.site is not None:
            fab.schedule_submit(ts.site, ts.task_id, ts.submit_time)
    for site_id, at in sc.site_fails:
        fab.schedule_site_fail(site_id, at)
    for site_id, at in sc.site_recovers:
        fab.schedule_site_recover(site_id, at)
    for task_id, at in sc.task_fails:
        fab.schedule_task_fail(task_id, at)
    return fab
