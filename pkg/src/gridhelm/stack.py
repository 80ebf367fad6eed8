"""Wires the full service ensemble (fabric, history store, estimators,
monitoring, scheduler, steering) into one gateway with the five core
services registered: steering, monitor, estimator, scheduler, fabric-admin.
"""

from __future__ import annotations

import time
from typing import Optional

from . import estimators
from .core import Job, Task, TaskAttributes, TaskState, attributes_from_doc, to_doc
from .fabric import SimFabric
from .gateway import GatewayServer, Registry, RpcGateway
from .history import HistoryStore
from .monitoring import MonitoringService
from .scenario import Scenario, build_fabric
from .scheduler import Scheduler
from .steering import OptimizerPolicy, SteeringCommand, SteeringService

DEFAULT_CREDENTIALS = {
    "alice": ("alice-pw", "user"),
    "bob": ("bob-pw", "user"),
    "root": ("root-pw", "admin"),
}


class GridStack:
    def __init__(self, scenario: Optional[Scenario] = None, store_dir=None,
                 credentials: Optional[dict] = None,
                 policy: Optional[OptimizerPolicy] = None,
                 dual_run: bool = False,
                 recovery_interval: float = 1.0,
                 audit_path=None):
        self.fabric: SimFabric = build_fabric(scenario) if scenario else SimFabric()
        self.store = HistoryStore(store_dir)
        self.scheduler = Scheduler(self.fabric, self.store)
        self.monitoring = MonitoringService(
            self.fabric, self.store,
            estimator=lambda attrs: estimators.estimate_runtime(self.store, attrs),
        )
        self.steering = SteeringService(
            self.fabric, self.store, self.scheduler,
            credentials=credentials if credentials is not None else dict(DEFAULT_CREDENTIALS),
            policy=policy, dual_run=dual_run, audit_path=audit_path,
        )
        self.scheduler.steering = self.steering
        self.recovery_interval = recovery_interval
        self._next_optimizer = self.steering.policy.check_interval
        self._next_recovery = recovery_interval
        self.registry = Registry()
        self.gateway = RpcGateway(self.registry)
        self._register_services()

    # ----------------------------------------------------------- simulation

    def advance(self, until: float) -> None:
        """Advance virtual time, running collector sync plus optimizer and
        recovery ticks at their configured cadence."""
        while True:
            boundary = min(self._next_optimizer, self._next_recovery)
            if boundary >= until:
                break
            self.fabric.advance(boundary)
            self.monitoring.collector_sync()
            if boundary >= self._next_recovery:
                self.steering.recovery_tick()
                self._next_recovery += self.recovery_interval
            if boundary >= self._next_optimizer:
                self.steering.optimizer_tick()
                self._next_optimizer += self.steering.policy.check_interval
        self.fabric.advance(until)
        self.monitoring.collector_sync()
        if until >= self._next_recovery:
            self.steering.recovery_tick()
            self._next_recovery = until + self.recovery_interval
        if until >= self._next_optimizer:
            self.steering.optimizer_tick()
            self._next_optimizer = until + self.steering.policy.check_interval

    def submit_job(self, job_doc: dict) -> dict:
        """Register a job's tasks (with their hidden sim runtimes) and plan it."""
        tasks: dict[str, Task] = {}
        for tdoc in job_doc["tasks"]:
            task = Task(
                task_id=tdoc["task_id"],
                attributes=attributes_from_doc(tdoc["attributes"]),
                checkpointable=bool(tdoc.get("checkpointable", False)),
                job_id=job_doc["job_id"],
            )
            self.fabric.register_task(
                task,
                true_runtime=float(tdoc.get("true_runtime", 60.0)),
                output_bytes=int(tdoc.get("output_bytes", 0)),
            )
            tasks[task.task_id] = task
        job = Job(
            job_id=job_doc["job_id"],
            owner=job_doc.get("owner", "anon"),
            tasks=tasks,
            edges=[tuple(e) for e in job_doc.get("edges", [])],
        )
        plan = self.scheduler.plan(job, data_site=job_doc.get("data_site"))
        return {
            "plan": to_doc(plan),
            "estimates": {tid: to_doc(t.submitted_estimate) for tid, t in tasks.items()},
        }

    # ------------------------------------------------------------- services

    def _register_services(self):
        fab = self.fabric
        store = self.store
        mon = self.monitoring
        steer = self.steering

        def steering_command(verb, task_id, session_id=None, priority=None, target_site=None):
            cmd = SteeringCommand(session_id=session_id, verb=verb, task_id=task_id,
                                  priority=priority, target_site=target_site)
            return to_doc(steer.execute_command(cmd))

        def whatif(task_id):
            task = fab.tasks.get(task_id)
            if task is None:
                from .errors import UnknownTask

                raise UnknownTask(task_id)
            return steer.move_scores(task)

        self.registry.register("steering", {
            "login": lambda user, credential: to_doc(steer.login(user, credential)),
            "logout": lambda session_id: steer.logout(session_id) or {"ok": True},
            "submit_plan": lambda job: self.submit_job(job),
            "command": steering_command,
            "policy_get": lambda: to_doc(steer.policy),
            "policy_set": self._policy_set,
            "audit_log": lambda: [to_doc(e) for e in steer.audit_log],
            "download_state": lambda task_id: to_doc(steer.download_state(task_id)),
            "whatif": whatif,
            "notifications": lambda: list(steer.notifications),
        }, read_only={"policy_get", "audit_log", "download_state", "whatif", "notifications"})

        def subscribe(from_seq, wait=0.0, limit=1000):
            deadline = time.monotonic() + float(wait)
            while True:
                events = mon.subscribe(int(from_seq))
                if events or time.monotonic() >= deadline:
                    break
                time.sleep(0.02)
            events = events[: int(limit)]
            next_seq = events[-1].seq if events else int(from_seq)
            return {"events": [to_doc(e) for e in events], "next_seq": next_seq}

        self.registry.register("monitor", {
            "query": lambda task_id, refresh=False: to_doc(mon.query(task_id, refresh=refresh)),
            "list": lambda: [to_doc(r) for r in mon.list_records()],
            "subscribe": subscribe,
            "sync": lambda: {"updates": mon.collector_sync()},
        }, read_only={"query", "list", "subscribe"})

        self.registry.register("estimator", {
            "runtime": lambda attributes: to_doc(
                estimators.estimate_runtime(store, attributes_from_doc(attributes))),
            "queue": lambda site_id, task_id: to_doc(
                estimators.estimate_queue_time(fab, store, site_id, task_id=task_id)),
            "transfer": lambda from_site, to_site, bytes: to_doc(
                estimators.estimate_transfer_time(fab, from_site, to_site, bytes)),
            "evaluate": self._evaluate,
        }, read_only={"runtime", "queue", "transfer"})

        def resubmit(task_id, exclude_site=None):
            from .errors import UnknownTask

            task = fab.tasks.get(task_id)
            if task is None:
                raise UnknownTask(task_id)
            site, est = self.scheduler.resubmit(task, exclude_site=exclude_site)
            return {"site": site, "estimate": to_doc(est)}

        self.registry.register("scheduler", {
            "plan": lambda job: self.submit_job(job),
            "resubmit": resubmit,
        })

        self.registry.register("fabric-admin", {
            "advance": lambda until: [to_doc(e) for e in fab.advance(float(until))],
            "run": lambda until: self.advance(float(until)) or {"clock": fab.clock},
            "site_state": lambda site_id: fab.site_view(site_id),
            "sites": lambda: [fab.site_view(s) for s in sorted(fab.sites)],
            "fail": lambda site_id: fab.fail_site(site_id) or {"ok": True},
            "recover": lambda site_id: fab.recover_site(site_id) or {"ok": True},
            "clock": lambda: {"clock": fab.clock},
            "event_log": lambda: fab.event_log_csv(),
        }, read_only={"site_state", "sites", "clock", "event_log"})

    def _policy_set(self, objective=None, check_interval=None, slowdown_threshold=None, enabled=None):
        p = self.steering.policy
        self.steering.policy = OptimizerPolicy(
            objective=objective if objective is not None else p.objective,
            check_interval=check_interval if check_interval is not None else p.check_interval,
            slowdown_threshold=slowdown_threshold if slowdown_threshold is not None else p.slowdown_threshold,
            enabled=enabled if enabled is not None else p.enabled,
        )
        return to_doc(self.steering.policy)

    def _evaluate(self, history_file, test_file):
        signed_mean, mape, evals = estimators.evaluate(history_file, test_file)
        return {"signed_mean_error": signed_mean, "mape": mape,
                "cases": [to_doc(e) for e in evals]}

    def serve(self, host: str = "127.0.0.1", port: int = 0) -> GatewayServer:
        return GatewayServer(self.gateway, host, port).start()
