"""Deterministic discrete-event kernel for pod lifecycles, scheduling rounds and OOM recovery.

Events are ordered by ``(time, kind priority, sequence)``. After every event
sharing a timestamp has been applied, a scheduling round walks the queue of
ready tasks and admits what the active strategy allows. Admission, start,
finish, OOM detection, deletion and requeue are each explicit events, so the
trace written by :class:`Simulator` is a complete replay log of a run.
"""

from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import collab
from .engine import (
    Allocation,
    EngineConfig,
    RoamRequest,
    allocate,
    fcfs_admit,
    place,
    residual_resources,
    used_resources,
)
from .injector import ArrivalSchedule
from .model import (
    ClusterState,
    Label,
    NodeSpec,
    PodRecord,
    PodState,
    TaskSpec,
    Tier,
    WorkflowSpec,
    topological_order,
    validate_workflow,
)
from .store import TaskRecord, TaskStore
from .timing import TimingModel, meets_deadline


class EventKind(str, enum.Enum):
    OOM_DETECTED = "OomDetected"
    POD_DELETED = "PodDeleted"
    POD_FINISH = "PodFinish"
    TASK_READY = "TaskReady"
    WORKFLOW_ARRIVAL = "WorkflowArrival"
    ALLOCATION_GRANTED = "AllocationGranted"
    POD_START = "PodStart"
    TASK_REQUEUE = "TaskRequeue"


PRIORITY = {kind: i for i, kind in enumerate(EventKind)}


class Strategy(str, enum.Enum):
    KCES = "kces"
    FCFS = "fcfs"


class Recovery(str, enum.Enum):
    ROAM = "roam"
    OFFLOAD = "offload"
    ROAM_THEN_OFFLOAD = "roam-offload"
    NONE = "none"


class Nonterminating(RuntimeError):
    def __init__(self, message: str, trace: Trace | None = None):
        super().__init__(message)
        self.trace = trace


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True, order=True)
class SimEvent:
    time_ms: int
    priority: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


@dataclass(frozen=True)
class SimConfig:
    strategy: Strategy = Strategy.KCES
    recovery: Recovery = Recovery.ROAM
    engine: EngineConfig = EngineConfig()
    timing: TimingModel = TimingModel()
    oom_detection_delay_ms: int = 21_000
    delete_delay_ms: int = 5_000
    reallocate_delay_ms: int = 7_000
    event_budget: int = 1_000_000
    check_invariants: bool = True
    registry: str = "registry.local"

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "recovery": self.recovery.value,
            "beta": self.engine.beta,
            "cpu_min": self.engine.cpu_min,
            "memory_floor": self.engine.memory_floor,
            "millicore_throughput": str(self.timing.throughput),
            "instructions_per_millicore": str(self.timing.instructions_per_millicore),
            "oom_detection_delay_ms": self.oom_detection_delay_ms,
            "delete_delay_ms": self.delete_delay_ms,
            "reallocate_delay_ms": self.reallocate_delay_ms,
            "event_budget": self.event_budget,
        }


@dataclass
class Trace:
    header: dict
    records: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header, separators=(",", ":"))]
        lines.extend(json.dumps(r, separators=(",", ":")) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> Trace:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("format") != "ceflow-trace":
            raise ValueError("not a ceflow trace")
        return cls(rows[0], rows[1:])

    def of_kind(self, *kinds: str) -> list[dict]:
        return [r for r in self.records if r["kind"] in kinds]


@dataclass
class WorkflowRun:
    spec: WorkflowSpec
    arrival_ms: int
    order: list[str]
    children: dict[str, list[str]]
    completed: set[str] = field(default_factory=set)
    failed: set[str] = field(default_factory=set)
    first_start: int | None = None
    last_end: int | None = None
    done: bool = False

    @property
    def tasks(self) -> dict[str, TaskSpec]:
        return self.spec.task_map


@dataclass
class QueueEntry:
    seq: int
    workflow_id: str
    task_id: str
    enqueued_ms: int
    waiting_logged: bool = False


WorkloadSource = Sequence[WorkflowSpec] | Callable[[int, int], WorkflowSpec]


class Simulator:
    def __init__(self, cluster: ClusterState, config: SimConfig = SimConfig(), seed: int = 0):
        self.cluster = cluster.copy_empty()
        self.config = config
        self.seed = seed
        self.store = TaskStore()
        self.now = 0
        self.workflows: dict[str, WorkflowRun] = {}
        self.queue: list[QueueEntry] = []
        self.finished_pods: list[PodRecord] = []
        self._heap: list[SimEvent] = []
        self._seq = 0
        self._qseq = 0
        self._dirty = False
        self._processed = 0
        self._task_cache: dict[tuple[str, str], TaskSpec] = {}
        self._est_at_admission: dict[tuple[str, str, int], int] = {}
        self.images: dict[str, dict[str, str]] = {}
        self.pinned: dict[tuple[str, str], str] = {}
        self._image_ids: set[str] = set()
        self.trace = Trace(
            {
                "format": "ceflow-trace",
                "version": 1,
                "seed": seed,
                "config": config.as_dict(),
                "nodes": {
                    ip: {"cpu": n.cpu_capacity, "mem": n.mem_capacity, "tier": n.tier.value, "scene": n.scene}
                    for ip, n in sorted(self.cluster.nodes.items())
                },
            }
        )

    # ----------------------------------------------------------------- plumbing

    def push(self, time_ms: int, kind: EventKind, **payload) -> SimEvent:
        ev = SimEvent(time_ms, PRIORITY[kind], self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def record(self, kind: str, **fields) -> None:
        rec = {"seq": len(self.trace.records), "time_ms": self.now, "kind": kind}
        rec.update(fields)
        self.trace.records.append(rec)

    def task(self, workflow_id: str, task_id: str) -> TaskSpec:
        return self._task_cache[(workflow_id, task_id)]

    def _gateway(self, task: TaskSpec) -> NodeSpec:
        return self.cluster.gateway_for(task.scene_hint)

    def _estimate(self, task: TaskSpec, node: NodeSpec, cpu: int):
        return self.config.timing.estimate(task, node, cpu, self._gateway(task))

    def _runtime(self, task: TaskSpec, node: NodeSpec, cpu: int) -> int:
        return self.config.timing.runtime_ms(task, self._estimate(task, node, cpu))

    def pin(self, workflow_id: str, task_id: str, node_ip: str) -> None:
        """Bypass placement for one task: it is labelled for ``node_ip`` on arrival."""
        self.cluster.node(node_ip)
        self.pinned[(workflow_id, task_id)] = node_ip

    def inject(self, workflow: WorkflowSpec, at_ms: int) -> None:
        self.push(at_ms, EventKind.WORKFLOW_ARRIVAL, workflow=workflow)

    # ------------------------------------------------------------------ driving

    def schedule_arrivals(self, workloads: WorkloadSource, schedule: ArrivalSchedule) -> None:
        index = 0
        for burst in schedule.bursts:
            for _ in range(burst.count):
                if callable(workloads):
                    spec = workloads(index, self.seed)
                else:
                    if not workloads:
                        raise ValueError("arrival schedule needs at least one workflow template")
                    spec = workloads[index % len(workloads)].renamed(f"wf-{index}")
                self.push(burst.time_ms, EventKind.WORKFLOW_ARRIVAL, workflow=spec)
                index += 1

    def run(self) -> Trace:
        while self._heap:
            t = self._heap[0].time_ms
            while self._heap and self._heap[0].time_ms == t:
                self.step(heapq.heappop(self._heap))
                self._processed += 1
                if self._processed > self.config.event_budget:
                    self.record("Warning", message="event budget exceeded")
                    raise Nonterminating(
                        f"event budget of {self.config.event_budget} exceeded at t={t}", self.trace
                    )
            if self._dirty:
                self._dirty = False
                self.dispatch()
                self._check_invariants()
        for entry in self.queue:
            self.record(
                "Warning",
                message="task starved: never admitted before quiescence",
                workflow_id=entry.workflow_id,
                task_id=entry.task_id,
            )
        self.record("RunEnd", quiescent=True, events=self._processed)
        return self.trace

    def step(self, ev: SimEvent) -> list[SimEvent]:
        """Apply one event; returns the events it scheduled."""
        if ev.time_ms < self.now:
            raise InvariantViolation(f"event {ev.kind.value} at {ev.time_ms} precedes clock {self.now}")
        self.now = ev.time_ms
        before = self._seq
        handler = getattr(self, "_on_" + ev.kind.name.lower())
        handler(**ev.payload)
        self._check_invariants()
        return [e for e in self._heap if e.seq >= before]

    # ----------------------------------------------------------------- handlers

    def _on_workflow_arrival(self, workflow: WorkflowSpec) -> None:
        wf = validate_workflow(workflow)
        if wf.workflow_id in self.workflows:
            raise ValueError(f"workflow {wf.workflow_id} injected twice")
        run = WorkflowRun(wf, self.now, topological_order(wf), wf.children())
        self.workflows[wf.workflow_id] = run
        for t in wf.tasks:
            self._task_cache[(wf.workflow_id, t.task_id)] = t
        self._image_ids |= {t.image_id for t in wf.tasks}
        if any(t.image_id not in self.images.get(ip, {}) for t in wf.tasks for ip in self.cluster.nodes):
            self.images = collab.node_task_image_map(self.cluster, self._image_ids, self.config.registry)

        residual = residual_resources(self.cluster)
        for tid in run.order:
            task = run.tasks[tid]
            self.store.put_record(
                TaskRecord(
                    workflow_id=wf.workflow_id,
                    task_id=tid,
                    labels=Label("", ""),
                    deadline_ms=self.now + task.deadline,
                    cpu_request=task.cpu_request,
                    mem_request=task.mem_request,
                    start_ms=self.now,
                    lifecycle_end_ms=self.now,
                )
            )
            pinned = self.pinned.get((wf.workflow_id, tid))
            if pinned is None:
                label = place(task, wf.workflow_id, self.cluster, self.store, residual)
            else:
                node = self.cluster.node(pinned)
                label = Label(node.scene, node.ip)
                self.store.update_label(wf.workflow_id, tid, label)
            rec = self.store.get(wf.workflow_id, tid)
            rec.image_address = self.images[label.value][task.image_id]
        self._predict(run)
        self.record("WorkflowArrival", workflow_id=wf.workflow_id, tasks=len(wf.tasks))
        for tid in run.order:
            if not run.tasks[tid].parents:
                self.push(self.now, EventKind.TASK_READY, workflow_id=wf.workflow_id, task_id=tid)

    def _on_task_ready(self, workflow_id: str, task_id: str) -> None:
        rec = self.store.get(workflow_id, task_id)
        rec.start_ms = self.now
        rec.lifecycle_end_ms = max(rec.lifecycle_end_ms, self.now)
        self._enqueue(workflow_id, task_id)
        self.record("TaskReady", workflow_id=workflow_id, task_id=task_id, node_ip=rec.labels.value)

    def _on_allocation_granted(self, workflow_id: str, task_id: str, incarnation: int) -> None:
        pod = self.cluster.pods[(workflow_id, task_id, incarnation)]
        self.record(
            "AllocationGranted",
            workflow_id=workflow_id,
            task_id=task_id,
            incarnation=incarnation,
            node_ip=pod.node_ip,
            cpu=pod.cpu,
            mem=pod.mem,
        )

    def _on_pod_start(self, workflow_id: str, task_id: str, incarnation: int) -> None:
        pod = self.cluster.pods[(workflow_id, task_id, incarnation)]
        pod.transition(PodState.RUNNING, self.now)
        task = self.task(workflow_id, task_id)
        run = self.workflows[workflow_id]
        if run.first_start is None:
            run.first_start = self.now
        node = self.cluster.node(pod.node_ip)
        self.record(
            "PodStart",
            workflow_id=workflow_id,
            task_id=task_id,
            incarnation=incarnation,
            node_ip=pod.node_ip,
            cpu=pod.cpu,
            mem=pod.mem,
        )
        if pod.mem < task.mem_min + self.config.engine.beta:
            self.push(
                self.now + self.config.oom_detection_delay_ms,
                EventKind.OOM_DETECTED,
                workflow_id=workflow_id,
                task_id=task_id,
                incarnation=incarnation,
            )
        else:
            self.push(
                self.now + self._runtime(task, node, pod.cpu),
                EventKind.POD_FINISH,
                workflow_id=workflow_id,
                task_id=task_id,
                incarnation=incarnation,
            )
        self._predict(run)

    def _on_pod_finish(self, workflow_id: str, task_id: str, incarnation: int) -> None:
        pod = self.cluster.pods.pop((workflow_id, task_id, incarnation))
        pod.transition(PodState.SUCCEEDED, self.now)
        self.finished_pods.append(pod)
        run = self.workflows[workflow_id]
        run.completed.add(task_id)
        run.last_end = self.now
        self.record(
            "PodFinish", workflow_id=workflow_id, task_id=task_id, incarnation=incarnation, node_ip=pod.node_ip
        )
        for child in run.children[task_id]:
            if run.tasks[child].parents <= run.completed:
                self.push(self.now, EventKind.TASK_READY, workflow_id=workflow_id, task_id=child)
        if len(run.completed) == len(run.tasks):
            self._finish_workflow(run, "succeeded")
        self._dirty = True

    def _on_oom_detected(self, workflow_id: str, task_id: str, incarnation: int) -> None:
        pod = self.cluster.pods[(workflow_id, task_id, incarnation)]
        task = self.task(workflow_id, task_id)
        event = collab.detect_oom(pod, task, self.config.engine.beta, self.now)
        if event is None:
            raise InvariantViolation(f"OOM scheduled for healthy pod {pod.key}")
        pod.transition(PodState.OOM_KILLED, self.now)
        self.record(
            "OomDetected",
            workflow_id=workflow_id,
            task_id=task_id,
            incarnation=incarnation,
            node_ip=pod.node_ip,
            cpu=pod.cpu,
            mem=pod.mem,
        )
        old_image = self.store.get(workflow_id, task_id).image_address
        action, label = self._recover(event, task)
        new_rec = self.store.get(workflow_id, task_id)
        self.record(
            "Recovery",
            workflow_id=workflow_id,
            task_id=task_id,
            action=action,
            from_ip=pod.node_ip,
            to_ip=label.value if label else None,
            old_cpu=pod.cpu,
            old_mem=pod.mem,
            old_image=old_image,
            new_image=new_rec.image_address,
        )
        self.push(
            self.now + self.config.delete_delay_ms,
            EventKind.POD_DELETED,
            workflow_id=workflow_id,
            task_id=task_id,
            incarnation=incarnation,
        )
        self._dirty = True

    def _recover(self, event: collab.OomEvent, task: TaskSpec) -> tuple[str, Label | None]:
        recovery = self.config.recovery
        run = self.workflows[event.workflow_id]
        current = self.store.get(event.workflow_id, event.task_id).labels
        if recovery is Recovery.NONE:
            run.failed.add(event.task_id)
            self.record(
                "Warning",
                message="task failed: OOMKilled with recovery disabled",
                workflow_id=event.workflow_id,
                task_id=event.task_id,
            )
            self._finish_workflow(run, "failed")
            return "fail", None
        on_cloud = self.cluster.node(event.node_ip).tier is Tier.CLOUD
        attempts: list[str]
        if on_cloud or recovery is Recovery.ROAM:
            attempts = ["roam"]
        elif recovery is Recovery.OFFLOAD:
            attempts = ["offload"]
        else:
            attempts = ["roam", "offload"]
        for kind in attempts:
            try:
                if kind == "roam":
                    return "roam", collab.roam(event, self.cluster, self.store)
                return "offload", collab.offload(event, self.cluster, self.store, self.images, task.image_id)
            except (collab.NoAlternativeNode, collab.NoCloudCapacity):
                continue
        self.record(
            "Warning",
            message="no recovery target; task requeued on its node, user should revisit the deadline",
            workflow_id=event.workflow_id,
            task_id=event.task_id,
        )
        return "requeue", current

    def _on_pod_deleted(self, workflow_id: str, task_id: str, incarnation: int) -> None:
        pod = self.cluster.pods.pop((workflow_id, task_id, incarnation))
        pod.transition(PodState.DELETED, self.now)
        self.finished_pods.append(pod)
        self.record(
            "PodDeleted", workflow_id=workflow_id, task_id=task_id, incarnation=incarnation, node_ip=pod.node_ip
        )
        if task_id not in self.workflows[workflow_id].failed:
            self.push(
                self.now + self.config.reallocate_delay_ms,
                EventKind.TASK_REQUEUE,
                workflow_id=workflow_id,
                task_id=task_id,
            )
        self._dirty = True

    def _on_task_requeue(self, workflow_id: str, task_id: str) -> None:
        rec = self.store.new_incarnation(workflow_id, task_id, start_ms=self.now, lifecycle_end_ms=self.now)
        self._enqueue(workflow_id, task_id)
        self.record(
            "TaskRequeue",
            workflow_id=workflow_id,
            task_id=task_id,
            incarnation=rec.incarnation,
            node_ip=rec.labels.value,
        )

    # ----------------------------------------------------------------- helpers

    def _enqueue(self, workflow_id: str, task_id: str) -> None:
        self.queue.append(QueueEntry(self._qseq, workflow_id, task_id, self.now))
        self._qseq += 1
        self._dirty = True

    def _finish_workflow(self, run: WorkflowRun, status: str) -> None:
        if run.done:
            return
        run.done = True
        self.record(
            "WorkflowDone",
            workflow_id=run.spec.workflow_id,
            status=status,
            first_start=run.first_start,
            last_end=run.last_end,
        )

    def _predict(self, run: WorkflowRun) -> None:
        """Refresh predicted start times of tasks whose parents are not all done."""
        wid = run.spec.workflow_id
        end: dict[str, int] = {}
        for tid in run.order:
            task = run.tasks[tid]
            rec = self.store.get(wid, tid)
            node = self.cluster.node(rec.labels.value)
            if tid in run.completed:
                end[tid] = self.now
                continue
            if not rec.alive and not (task.parents <= run.completed):
                # released by the parents' completion, so strictly after their windows
                rec.start_ms = max([self.now] + [end[p] + 1 for p in task.parents])
                est = self._estimate(task, node, task.cpu_request)
                rec.lifecycle_end_ms = rec.start_ms + est.total_ms
            cpu = rec.allocated_cpu if rec.alive else task.cpu_request
            end[tid] = rec.start_ms + self._runtime(task, node, cpu)

    # ---------------------------------------------------------------- admission

    def dispatch(self) -> None:
        blocked: set[str] = set()
        for entry in list(self.queue):
            run = self.workflows[entry.workflow_id]
            if run.done:
                self.queue.remove(entry)
                continue
            task = self.task(entry.workflow_id, entry.task_id)
            rec = self.store.get(entry.workflow_id, entry.task_id)
            node = self.cluster.node(rec.labels.value)
            if self.config.strategy is Strategy.FCFS:
                if node.ip in blocked:
                    continue
                grant = fcfs_admit(task, node, self.cluster)
                verdict, branch, reason = "grant", "A1A2", ""
                if grant is None:
                    blocked.add(node.ip)
                    verdict, branch, reason = "wait", "", "insufficient residual"
            else:
                full = self._estimate(task, node, task.cpu_request)
                rec.start_ms = self.now
                rec.lifecycle_end_ms = self.now + full.total_ms
                decision = allocate(task, entry.workflow_id, node, self.store, self.cluster, self.config.engine)
                branch = decision.branch
                if isinstance(decision, Allocation):
                    grant, verdict, reason = decision, "grant", ""
                elif (
                    decision.grant is not None
                    and rec.incarnation == 0
                    and decision.grant.mem >= self.config.engine.memory_floor
                ):
                    # granted below mem_min + beta: the pod will be OOMKilled
                    grant, verdict, reason = decision.grant, "grant-below-floor", decision.reason
                else:
                    # a recovered task only restarts with a survivable grant; otherwise
                    # co-scheduled victims could OOM and roam in lockstep forever
                    grant, verdict = None, "wait"
                    if decision.grant is None:
                        reason = decision.reason
                    elif rec.incarnation:
                        reason = f"recovered task needs {task.mem_min + self.config.engine.beta}Mi"
                    else:
                        reason = f"grant {decision.grant.mem}Mi under allocation floor"
                    if not any(p.node_ip == node.ip and p.holds_resources for p in self.cluster.pods.values()):
                        # waiting peers reserve for each other symmetrically; an idle node
                        # breaks the tie in queue order so the run cannot stall
                        grant = fcfs_admit(task, node, self.cluster)
                        if grant is not None:
                            verdict, reason = "grant-idle-node", "node idle, full request granted"
            if grant is not None and not meets_deadline(self._estimate(task, node, grant.cpu), task):
                grant, verdict, reason = None, "wait", "deadline not met at this allocation"
            if grant is None:
                if not entry.waiting_logged:
                    entry.waiting_logged = True
                    self.record(
                        "Decision",
                        workflow_id=entry.workflow_id,
                        task_id=entry.task_id,
                        node_ip=node.ip,
                        verdict=verdict,
                        cpu=0,
                        mem=0,
                        branch=branch,
                        reason=reason,
                    )
                continue
            self.record(
                "Decision",
                workflow_id=entry.workflow_id,
                task_id=entry.task_id,
                node_ip=node.ip,
                verdict=verdict,
                cpu=grant.cpu,
                mem=grant.mem,
                branch=branch,
                reason=reason,
            )
            self._admit(entry, task, rec, node, grant)

    def _admit(self, entry: QueueEntry, task: TaskSpec, rec: TaskRecord, node: NodeSpec, grant: Allocation) -> None:
        self.queue.remove(entry)
        pod = PodRecord(
            entry.workflow_id, entry.task_id, rec.incarnation, node.ip, grant.cpu, grant.mem, created_ms=self.now
        )
        self.cluster.pods[pod.key] = pod
        self._est_at_admission[pod.key] = self._estimate(task, node, grant.cpu).total_ms
        rec.alive = True
        rec.start_ms = self.now
        rec.allocated_cpu = grant.cpu
        rec.allocated_mem = grant.mem
        self.push(
            self.now,
            EventKind.ALLOCATION_GRANTED,
            workflow_id=entry.workflow_id,
            task_id=entry.task_id,
            incarnation=rec.incarnation,
        )
        self.push(
            self.now,
            EventKind.POD_START,
            workflow_id=entry.workflow_id,
            task_id=entry.task_id,
            incarnation=rec.incarnation,
        )

    # --------------------------------------------------------------- invariants

    def _check_invariants(self) -> None:
        if not self.config.check_invariants:
            return
        used = used_resources(self.cluster)
        for ip, node in self.cluster.nodes.items():
            if used[ip].cpu > node.cpu_capacity or used[ip].mem > node.mem_capacity:
                raise InvariantViolation(
                    f"t={self.now} node {ip}: allocated ({used[ip].cpu}m, {used[ip].mem}Mi) exceeds capacity"
                )
        for key, pod in self.cluster.pods.items():
            if pod.state is PodState.RUNNING:
                task = self.task(pod.workflow_id, pod.task_id)
                if self._est_at_admission[key] > task.deadline:
                    raise InvariantViolation(f"pod {key} admitted without meeting its deadline")


def run(
    cluster: ClusterState,
    workloads: WorkloadSource,
    schedule: ArrivalSchedule,
    strategy: Strategy = Strategy.KCES,
    recovery: Recovery = Recovery.ROAM,
    seed: int = 0,
    config: SimConfig | None = None,
) -> Trace:
    base = config or SimConfig()
    cfg = SimConfig(
        strategy=Strategy(strategy),
        recovery=Recovery(recovery),
        engine=base.engine,
        timing=base.timing,
        oom_detection_delay_ms=base.oom_detection_delay_ms,
        delete_delay_ms=base.delete_delay_ms,
        reallocate_delay_ms=base.reallocate_delay_ms,
        event_budget=base.event_budget,
        check_invariants=base.check_invariants,
        registry=base.registry,
    )
    sim = Simulator(cluster, cfg, seed)
    sim.schedule_arrivals(workloads, schedule)
    return sim.run()


def replay_usage(trace: Trace) -> Iterable[tuple[int, dict[str, tuple[int, int]]]]:
    """Yield (time, per-node allocated (cpu, mem)) after each record that changes allocations."""
    live: dict[tuple, tuple[str, int, int]] = {}
    for r in trace.records:
        kind = r["kind"]
        if kind == "AllocationGranted":
            live[(r["workflow_id"], r["task_id"], r["incarnation"])] = (r["node_ip"], r["cpu"], r["mem"])
        elif kind in ("PodFinish", "OomDetected"):
            live.pop((r["workflow_id"], r["task_id"], r["incarnation"]), None)
        else:
            continue
        totals: dict[str, tuple[int, int]] = {}
        for ip, cpu, mem in live.values():
            c, m = totals.get(ip, (0, 0))
            totals[ip] = (c + cpu, m + mem)
        yield r["time_ms"], totals
