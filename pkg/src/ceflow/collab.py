"""OOM detection, horizontal roaming within an edge scene, vertical offloading to the cloud."""

from __future__ import annotations

from dataclasses import dataclass

from .engine import Allocation, rank_nodes, residual_resources
from .model import ClusterState, Label, NodeSpec, PodRecord, TaskSpec, Tier
from .store import TaskStore


class NoAlternativeNode(LookupError):
    pass


class NoCloudCapacity(LookupError):
    pass


@dataclass(frozen=True)
class OomEvent:
    workflow_id: str
    task_id: str
    node_ip: str
    time_ms: int
    allocated: Allocation


def cluster_node_label_map(cluster: ClusterState) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for ip in sorted(cluster.nodes):
        out.setdefault(cluster.nodes[ip].scene, []).append(ip)
    return out


def image_address(node: NodeSpec, image_id: str, registry: str = "registry.local") -> str:
    return f"{registry}/{node.arch}/{image_id}:latest"


def node_task_image_map(
    cluster: ClusterState, image_ids: list[str] | set[str], registry: str = "registry.local"
) -> dict[str, dict[str, str]]:
    """Per node ip, the address of every task image built for that node's architecture."""
    ids = sorted(set(image_ids))
    return {
        ip: {img: image_address(node, img, registry) for img in ids}
        for ip, node in sorted(cluster.nodes.items())
    }


def detect_oom(pod: PodRecord, task: TaskSpec, beta: int, now: int) -> OomEvent | None:
    if not pod.holds_resources:
        return None
    if pod.mem >= task.mem_min + beta:
        return None
    return OomEvent(
        pod.workflow_id,
        pod.task_id,
        pod.node_ip,
        now,
        Allocation(pod.cpu, pod.mem, pod.node_ip, True, "oom"),
    )


def _require_released(cluster: ClusterState, event: OomEvent) -> None:
    # the failed pod must already be out of the residual used for the search
    for key, pod in list(cluster.pods.items()):
        if (
            pod.workflow_id == event.workflow_id
            and pod.task_id == event.task_id
            and pod.node_ip == event.node_ip
            and pod.holds_resources
        ):
            raise RuntimeError(f"pod {key} still holds resources; kill it before recovery")


def roam(event: OomEvent, cluster: ClusterState, store: TaskStore) -> Label:
    """Move the task to the best other node sharing its label key (same scene)."""
    _require_released(cluster, event)
    label_map = cluster_node_label_map(cluster)
    rec = store.get(event.workflow_id, event.task_id)
    key = rec.labels.key
    residual = residual_resources(cluster)
    candidates = [
        cluster.nodes[ip]
        for ip in label_map.get(key, [])
        if ip != event.node_ip and residual[ip].mem > 0 and residual[ip].cpu > 0
    ]
    if not candidates:
        raise NoAlternativeNode(f"{event.workflow_id}/{event.task_id}: no other node in {key}")
    best = rank_nodes(candidates, residual)[0]
    label = Label(key, best.ip)
    store.update_label(event.workflow_id, event.task_id, label)
    return label


def offload(
    event: OomEvent,
    cluster: ClusterState,
    store: TaskStore,
    images: dict[str, dict[str, str]],
    image_id: str,
) -> Label:
    """Move an edge task to the cloud scene paired with its edge scene, switching image address."""
    _require_released(cluster, event)
    rec = store.get(event.workflow_id, event.task_id)
    source = cluster.node(event.node_ip)
    if source.tier is not Tier.EDGE:
        raise NoCloudCapacity(f"{event.workflow_id}/{event.task_id} is not hosted on an edge node")
    cloud_scene = cluster.scene_pairing.get(rec.labels.key, cluster.cloud_scene)
    label_map = cluster_node_label_map(cluster)
    residual = residual_resources(cluster)
    candidates = [
        cluster.nodes[ip]
        for ip in label_map.get(cloud_scene, [])
        if ip != event.node_ip
        and cluster.nodes[ip].tier is Tier.CLOUD
        and residual[ip].mem > 0
        and residual[ip].cpu > 0
    ]
    if not candidates:
        raise NoCloudCapacity(f"{event.workflow_id}/{event.task_id}: no cloud node in {cloud_scene}")
    best = rank_nodes(candidates, residual)[0]
    label = Label(cloud_scene, best.ip)
    store.update_label(event.workflow_id, event.task_id, label, images[best.ip][image_id])
    return label
