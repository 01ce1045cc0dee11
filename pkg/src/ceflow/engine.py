"""Resource Manager: residual discovery, competing demand, evaluation, scaled allocation, placement."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .model import ClusterState, Label, NodeSpec, Role, TaskSpec, Tier, UnknownNode
from .store import TaskStore


class NonPositiveHeadroom(ValueError):
    """Node has no capacity left for a resource that needs scaling."""


class NoNodeInScene(LookupError):
    pass


@dataclass(frozen=True)
class Resources:
    cpu: int
    mem: int


@dataclass(frozen=True)
class EngineConfig:
    beta: int = 20  # Mi added to mem_min
    cpu_min: int = 1  # millicores
    memory_floor: int = 100  # Mi; grants below this wait for the next round


@dataclass(frozen=True)
class Allocation:
    cpu: int
    mem: int
    node_ip: str
    scaled: bool = False
    branch: str = "A1A2"

    def __post_init__(self) -> None:
        if self.cpu < 1 or self.mem < 1:
            raise ValueError(f"allocation must be positive, got ({self.cpu}m, {self.mem}Mi)")


@dataclass(frozen=True)
class RoamRequest:
    """Allocation fell below the task's survival floor (or could not be scaled at all)."""

    node_ip: str
    branch: str
    grant: Allocation | None = None
    reason: str = ""


ResidualResourceMap = dict[str, Resources]


def used_resources(cluster: ClusterState) -> dict[str, Resources]:
    cpu = {ip: 0 for ip in cluster.nodes}
    mem = {ip: 0 for ip in cluster.nodes}
    for pod in cluster.pods.values():
        if pod.holds_resources:
            cpu[pod.node_ip] += pod.cpu
            mem[pod.node_ip] += pod.mem
    return {ip: Resources(cpu[ip], mem[ip]) for ip in cluster.nodes}


def residual_resources(cluster: ClusterState) -> ResidualResourceMap:
    used = used_resources(cluster)
    return {
        ip: Resources(n.cpu_capacity - used[ip].cpu, n.mem_capacity - used[ip].mem)
        for ip, n in cluster.nodes.items()
    }


def concurrent_demand(task: TaskSpec, workflow_id: str, label: Label, store: TaskStore) -> Resources:
    """Requests of not-yet-alive tasks on the same node starting inside this task's lifecycle."""
    me = store.get(workflow_id, task.task_id)
    cpu = mem = 0
    for rec in store.pending_on_node(label, (me.start_ms, me.lifecycle_end_ms)):
        if rec.workflow_id == workflow_id and rec.task_id == task.task_id:
            continue
        cpu += rec.cpu_request
        mem += rec.mem_request
    return Resources(cpu, mem)


def _fits(allocatable: int, request: int, used: int, compete: int) -> bool:
    return allocatable >= request + used + compete


def evaluate(
    task: TaskSpec,
    workflow_id: str,
    node: NodeSpec,
    store: TaskStore,
    cluster: ClusterState,
) -> bool:
    if node.ip not in cluster.nodes:
        raise UnknownNode(node.ip)
    used = used_resources(cluster)[node.ip]
    compete = concurrent_demand(task, workflow_id, Label(node.scene, node.ip), store)
    return _fits(node.cpu_capacity, task.cpu_request, used.cpu, compete.cpu) and _fits(
        node.mem_capacity, task.mem_request, used.mem, compete.mem
    )


def _cut(request: int, allocatable: int, used: int, compete: int) -> int:
    headroom = allocatable - used
    if headroom <= 0:
        raise NonPositiveHeadroom(f"headroom {headroom}")
    value = Fraction(request * headroom, request + compete)
    return max(1, min(request, value.numerator // value.denominator))


def scale_demand(
    request: Resources,
    allocatable: Resources,
    used: Resources,
    compete: Resources,
) -> Resources:
    """Shrink a request in proportion to the headroom left after running and competing pods."""
    return Resources(
        _cut(request.cpu, allocatable.cpu, used.cpu, compete.cpu),
        _cut(request.mem, allocatable.mem, used.mem, compete.mem),
    )


def allocate(
    task: TaskSpec,
    workflow_id: str,
    node: NodeSpec,
    store: TaskStore,
    cluster: ClusterState,
    config: EngineConfig = EngineConfig(),
) -> Allocation | RoamRequest:
    if node.ip not in cluster.nodes:
        raise UnknownNode(node.ip)
    used = used_resources(cluster)[node.ip]
    compete = concurrent_demand(task, workflow_id, Label(node.scene, node.ip), store)
    a1 = _fits(node.cpu_capacity, task.cpu_request, used.cpu, compete.cpu)
    a2 = _fits(node.mem_capacity, task.mem_request, used.mem, compete.mem)
    branch = ("A1" if a1 else "¬A1") + ("A2" if a2 else "¬A2")
    if a1 and a2:
        return Allocation(task.cpu_request, task.mem_request, node.ip, False, branch)
    try:
        cpu = task.cpu_request if a1 else _cut(task.cpu_request, node.cpu_capacity, used.cpu, compete.cpu)
        mem = task.mem_request if a2 else _cut(task.mem_request, node.mem_capacity, used.mem, compete.mem)
    except NonPositiveHeadroom as exc:
        return RoamRequest(node.ip, branch, None, f"no headroom: {exc}")
    grant = Allocation(cpu, mem, node.ip, True, branch)
    if cpu >= config.cpu_min and mem >= task.mem_min + config.beta:
        return grant
    return RoamRequest(node.ip, branch, grant, f"memory {mem}Mi below {task.mem_min + config.beta}Mi")


def fcfs_admit(task: TaskSpec, node: NodeSpec, cluster: ClusterState) -> Allocation | None:
    """Baseline: full request if the node's residual covers it, otherwise nothing."""
    used = used_resources(cluster)[node.ip]
    if _fits(node.cpu_capacity, task.cpu_request, used.cpu, 0) and _fits(
        node.mem_capacity, task.mem_request, used.mem, 0
    ):
        return Allocation(task.cpu_request, task.mem_request, node.ip, False, "A1A2")
    return None


def rank_nodes(nodes: list[NodeSpec], residual: Mapping[str, Resources]) -> list[NodeSpec]:
    """Largest residual memory first, then residual cpu, then ip (lexicographic)."""
    return sorted(nodes, key=lambda n: (-residual[n.ip].mem, -residual[n.ip].cpu, n.ip))


def candidate_nodes(task: TaskSpec, cluster: ClusterState) -> list[NodeSpec]:
    if task.role is Role.EDGE_BOUND:
        return cluster.scene_nodes(task.scene_hint, Tier.EDGE)
    scene = cluster.scene_pairing.get(task.scene_hint, cluster.cloud_scene)
    return cluster.scene_nodes(scene, Tier.CLOUD)


def place(
    task: TaskSpec,
    workflow_id: str,
    cluster: ClusterState,
    store: TaskStore,
    residual: ResidualResourceMap | None = None,
) -> Label:
    nodes = candidate_nodes(task, cluster)
    if not nodes:
        where = task.scene_hint if task.role is Role.EDGE_BOUND else "cloud tier"
        raise NoNodeInScene(f"task {task.task_id}: no node in {where}")
    if residual is None:
        residual = residual_resources(cluster)
    best = rank_nodes(nodes, residual)[0]
    label = Label(best.scene, best.ip)
    store.update_label(workflow_id, task.task_id, label)
    return label
