"""Cluster, workflow and pod domain types plus DAG validation."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping


class Tier(str, enum.Enum):
    CLOUD = "cloud"
    EDGE = "edge"


class Role(str, enum.Enum):
    CLOUD_BOUND = "cloud"
    EDGE_BOUND = "edge"


class WorkflowError(ValueError):
    """Structural problem in a workflow definition."""


class CycleDetected(WorkflowError):
    pass


class DanglingParent(WorkflowError):
    pass


class DeadlineMismatch(WorkflowError):
    pass


class InvalidTask(WorkflowError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    ip: str
    tier: Tier
    scene: str
    cpu_capacity: int  # millicores
    mem_capacity: int  # Mi
    device_bandwidth: Fraction  # bytes/s, device -> edge
    uplink_bandwidth: Fraction  # bytes/s, edge -> cloud
    image_cache: frozenset[str] = frozenset()
    arch: str = ""

    def __post_init__(self) -> None:
        if self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise ValueError(f"node {self.node_id}: capacities must be positive")
        object.__setattr__(self, "device_bandwidth", Fraction(self.device_bandwidth))
        object.__setattr__(self, "uplink_bandwidth", Fraction(self.uplink_bandwidth))
        if self.device_bandwidth <= 0 or self.uplink_bandwidth <= 0:
            raise ValueError(f"node {self.node_id}: bandwidths must be positive")
        object.__setattr__(self, "image_cache", frozenset(self.image_cache))
        if not self.arch:
            object.__setattr__(self, "arch", "amd64" if self.tier is Tier.CLOUD else "arm64")

    def caches(self, image_id: str) -> bool:
        # the image warehouse lives in the cloud
        return self.tier is Tier.CLOUD or image_id in self.image_cache


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    parents: frozenset[str]
    data_volume: int  # bytes
    image_id: str
    image_size: int  # bytes
    instructions_per_byte: Fraction
    cpu_request: int  # millicores
    mem_request: int  # Mi
    mem_min: int  # Mi
    duration: int  # ms
    deadline: int  # ms from workflow start
    role: Role
    scene_hint: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", frozenset(self.parents))
        object.__setattr__(self, "instructions_per_byte", Fraction(self.instructions_per_byte))
        object.__setattr__(self, "role", Role(self.role))
        problems = []
        if self.mem_min > self.mem_request:
            problems.append("mem_min exceeds mem_request")
        if self.duration <= 0:
            problems.append("duration must be positive")
        if self.deadline <= 0:
            problems.append("deadline must be positive")
        if self.cpu_request < 1 or self.mem_request < 1:
            problems.append("resource requests must be positive")
        if self.data_volume < 0 or self.image_size < 0:
            problems.append("data volumes must be non-negative")
        if self.role is Role.EDGE_BOUND and not self.scene_hint:
            problems.append("edge-bound task needs a scene_hint")
        if problems:
            raise InvalidTask(f"task {self.task_id}: " + "; ".join(problems))


@dataclass(frozen=True)
class WorkflowSpec:
    workflow_id: str
    deadline: int
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))

    @property
    def task_map(self) -> dict[str, TaskSpec]:
        return {t.task_id: t for t in self.tasks}

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {t.task_id: [] for t in self.tasks}
        for t in self.tasks:
            for p in sorted(t.parents):
                if p in out:
                    out[p].append(t.task_id)
        return out

    def sinks(self) -> list[str]:
        kids = self.children()
        return [tid for tid, c in kids.items() if not c]

    def renamed(self, workflow_id: str) -> WorkflowSpec:
        return WorkflowSpec(workflow_id, self.deadline, self.tasks)


@dataclass(frozen=True)
class Label:
    key: str  # scene keyword, e.g. "edge-1" or "cloud"
    value: str  # node ip

    def __str__(self) -> str:
        return f"{self.key}:{self.value}"


class PodState(str, enum.Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    OOM_KILLED = "OOMKilled"
    DELETED = "Deleted"


_POD_TRANSITIONS = {
    PodState.PENDING: {PodState.RUNNING, PodState.OOM_KILLED},
    PodState.RUNNING: {PodState.SUCCEEDED, PodState.OOM_KILLED},
    PodState.OOM_KILLED: {PodState.DELETED},
    PodState.SUCCEEDED: set(),
    PodState.DELETED: set(),
}


class IllegalTransition(RuntimeError):
    pass


@dataclass
class PodRecord:
    workflow_id: str
    task_id: str
    incarnation: int
    node_ip: str
    cpu: int
    mem: int
    state: PodState = PodState.PENDING
    created_ms: int = 0
    started_ms: int | None = None
    finished_ms: int | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.workflow_id, self.task_id, self.incarnation)

    @property
    def holds_resources(self) -> bool:
        return self.state in (PodState.PENDING, PodState.RUNNING)

    def transition(self, new: PodState, now: int) -> None:
        if new not in _POD_TRANSITIONS[self.state]:
            raise IllegalTransition(f"pod {self.key}: {self.state.value} -> {new.value}")
        last = max(x for x in (self.created_ms, self.started_ms, self.finished_ms) if x is not None)
        if now < last:
            raise IllegalTransition(f"pod {self.key}: time went backwards ({now} < {last})")
        self.state = new
        if new is PodState.RUNNING:
            self.started_ms = now
        elif new in (PodState.SUCCEEDED, PodState.OOM_KILLED):
            self.finished_ms = now


@dataclass
class ClusterState:
    """Nodes plus the live pod table. Only the simulation kernel mutates it."""

    nodes: dict[str, NodeSpec]  # keyed by ip
    cloud_scene: str = "cloud"
    scene_pairing: dict[str, str] = field(default_factory=dict)  # edge scene -> cloud scene
    pods: dict[tuple[str, str, int], PodRecord] = field(default_factory=dict)

    @classmethod
    def from_nodes(
        cls,
        nodes: Iterable[NodeSpec],
        cloud_scene: str = "cloud",
        scene_pairing: Mapping[str, str] | None = None,
    ) -> ClusterState:
        table: dict[str, NodeSpec] = {}
        for n in nodes:
            if n.ip in table:
                raise ValueError(f"duplicate node ip {n.ip}")
            table[n.ip] = n
        pairing = dict(scene_pairing or {})
        for n in table.values():
            if n.tier is Tier.EDGE:
                pairing.setdefault(n.scene, cloud_scene)
        return cls(nodes=table, cloud_scene=cloud_scene, scene_pairing=pairing)

    def node(self, ip: str) -> NodeSpec:
        try:
            return self.nodes[ip]
        except KeyError:
            raise UnknownNode(ip) from None

    def scene_nodes(self, scene: str, tier: Tier | None = None) -> list[NodeSpec]:
        return [
            n
            for n in self.nodes.values()
            if n.scene == scene and (tier is None or n.tier is tier)
        ]

    def edge_scenes(self) -> list[str]:
        return sorted({n.scene for n in self.nodes.values() if n.tier is Tier.EDGE})

    def gateway_for(self, scene: str) -> NodeSpec:
        """Edge node relaying device data of ``scene`` towards the cloud."""
        scenes = self.edge_scenes()
        if not scenes:
            raise UnknownNode(f"no edge node available as gateway for {scene!r}")
        if scene not in scenes:
            scene = scenes[0]
        return min(self.scene_nodes(scene, Tier.EDGE), key=lambda n: n.ip)

    def copy_empty(self) -> ClusterState:
        return ClusterState(dict(self.nodes), self.cloud_scene, dict(self.scene_pairing))


class UnknownNode(KeyError):
    pass


def topological_order(wf: WorkflowSpec) -> list[str]:
    """Kahn's algorithm; ties broken by declaration order."""
    index = {t.task_id: i for i, t in enumerate(wf.tasks)}
    indeg = {t.task_id: len(t.parents) for t in wf.tasks}
    kids = wf.children()
    ready = deque(tid for tid in index if indeg[tid] == 0)
    order: list[str] = []
    while ready:
        tid = ready.popleft()
        order.append(tid)
        for c in kids[tid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(order) != len(index):
        stuck = sorted(set(index) - set(order), key=index.__getitem__)
        raise CycleDetected(f"workflow {wf.workflow_id}: cycle among {stuck}")
    return order


def validate_workflow(wf: WorkflowSpec) -> WorkflowSpec:
    if not wf.tasks:
        raise WorkflowError(f"workflow {wf.workflow_id} has no tasks")
    ids = [t.task_id for t in wf.tasks]
    if len(set(ids)) != len(ids):
        raise WorkflowError(f"workflow {wf.workflow_id}: duplicate task ids")
    known = set(ids)
    for t in wf.tasks:
        missing = sorted(t.parents - known)
        if missing:
            raise DanglingParent(f"task {t.task_id} references unknown parents {missing}")
        if t.task_id in t.parents:
            raise CycleDetected(f"task {t.task_id} is its own parent")
    topological_order(wf)
    if not _weakly_connected(wf):
        raise WorkflowError(f"workflow {wf.workflow_id} is not connected")
    sinks = wf.sinks()
    if len(sinks) != 1:
        raise WorkflowError(f"workflow {wf.workflow_id} must have one sink task, found {sinks}")
    sink = wf.task_map[sinks[0]]
    if sink.deadline != wf.deadline:
        raise DeadlineMismatch(
            f"sink {sink.task_id} deadline {sink.deadline} != workflow deadline {wf.deadline}"
        )
    return wf


def _weakly_connected(wf: WorkflowSpec) -> bool:
    adj: dict[str, set[str]] = {t.task_id: set() for t in wf.tasks}
    for t in wf.tasks:
        for p in t.parents:
            adj[t.task_id].add(p)
            adj[p].add(t.task_id)
    start = wf.tasks[0].task_id
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(adj)


def ready_tasks(wf: WorkflowSpec, completed: set[str] | frozenset[str]) -> set[str]:
    """Tasks not yet completed whose parents have all completed."""
    return {
        t.task_id
        for t in wf.tasks
        if t.task_id not in completed and t.parents <= completed
    }
