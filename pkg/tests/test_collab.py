from __future__ import annotations

import random

import pytest

from ceflow.collab import (
    NoAlternativeNode,
    NoCloudCapacity,
    OomEvent,
    cluster_node_label_map,
    detect_oom,
    node_task_image_map,
    offload,
    roam,
)
from ceflow.engine import Allocation
from ceflow.model import ClusterState, Label, PodRecord, PodState, Tier
from ceflow.store import TaskRecord, TaskStore

from . import oracles
from .conftest import make_node, make_task


def running_pod(ip: str, cpu: int, mem: int, wf="w", task="T") -> PodRecord:
    pod = PodRecord(wf, task, 0, ip, cpu, mem)
    pod.transition(PodState.RUNNING, 0)
    return pod


def load(cluster: ClusterState, ip: str, cpu: int, mem: int) -> None:
    pod = running_pod(ip, cpu, mem, wf="bg", task=f"bg-{ip}-{len(cluster.pods)}")
    cluster.pods[pod.key] = pod


def oom_event(ip: str, wf="w", task="T") -> OomEvent:
    return OomEvent(wf, task, ip, 21_000, Allocation(400, 199, ip, True, "oom"))


def store_for(label: Label, wf="w", task="T", image="registry.local/arm64/img:latest") -> TaskStore:
    s = TaskStore()
    s.put_record(TaskRecord(wf, task, label, image_address=image))
    return s


@pytest.mark.parametrize("mem, fires", [(199, True), (220, False), (45, True), (219, True)])
def test_detect_oom_threshold(mem, fires):
    pod = running_pod("10.0.0.3", 400, mem)
    event = detect_oom(pod, make_task(mem_min=200), beta=20, now=5)
    assert (event is not None) is fires
    if fires:
        assert event.allocated.mem == mem and event.time_ms == 5


def test_detect_oom_ignores_finished_pod():
    pod = running_pod("10.0.0.3", 400, 10)
    pod.transition(PodState.SUCCEEDED, 1)
    assert detect_oom(pod, make_task(), 20, 2) is None


def test_roam_to_sibling_keeps_image(testbed):
    label = Label("edge-1", "192.168.0.163")
    s = store_for(label, task="T5")
    new = roam(oom_event("192.168.0.163", task="T5"), testbed, s)
    assert new == Label("edge-1", "192.168.0.164")
    assert s.get("w", "T5").image_address == "registry.local/arm64/img:latest"


def test_roam_single_node_scene(small_cluster):
    s = store_for(Label("edge-2", "10.0.0.5"))
    with pytest.raises(NoAlternativeNode):
        roam(oom_event("10.0.0.5"), small_cluster, s)


def test_roam_skips_exhausted_sibling(small_cluster):
    load(small_cluster, "10.0.0.4", 4000, 100)
    s = store_for(Label("edge-1", "10.0.0.3"))
    with pytest.raises(NoAlternativeNode):
        roam(oom_event("10.0.0.3"), small_cluster, s)


def test_roam_refuses_while_failed_pod_holds_resources(small_cluster):
    pod = running_pod("10.0.0.3", 400, 199)
    small_cluster.pods[pod.key] = pod
    with pytest.raises(RuntimeError):
        roam(oom_event("10.0.0.3"), small_cluster, store_for(Label("edge-1", "10.0.0.3")))


def test_roam_argmax_matches_exhaustive_comparison():
    rng = random.Random(31)
    ips = ["10.0.0.3", "10.0.0.4", "10.0.0.6", "10.0.0.7"]
    for _ in range(300):
        c = ClusterState.from_nodes([make_node(ip) for ip in ips])
        for ip in ips:
            load(c, ip, rng.randint(0, 3999), rng.choice([0, 500, 1000, 1500]))
        got = roam(oom_event("10.0.0.3"), c, store_for(Label("edge-1", "10.0.0.3")))
        cands = [(ip, 2048 - c.pods[k].mem, 4000 - c.pods[k].cpu) for k in c.pods for ip in [c.pods[k].node_ip]
                 if ip != "10.0.0.3"]
        assert got.value == oracles.best_node(cands)
        assert got.key == "edge-1"


def test_offload_edge2_goes_to_freer_cloud_node(testbed):
    load(testbed, "192.168.0.161", 500, 1024)
    s = store_for(Label("edge-2", "192.168.0.166"), task="T19")
    images = node_task_image_map(testbed, ["iot-process"])
    new = offload(oom_event("192.168.0.166", task="T19"), testbed, s, images, "iot-process")
    assert new == Label("cloud", "192.168.0.162")
    assert s.get("w", "T19").image_address == "registry.local/amd64/iot-process:latest"


def test_offload_edge1_to_node1(testbed):
    load(testbed, "192.168.0.162", 200, 600)
    images = node_task_image_map(testbed, ["iot-collect"])
    for task in ("T1", "T2"):
        s = store_for(Label("edge-1", "192.168.0.163"), task=task)
        new = offload(oom_event("192.168.0.163", task=task), testbed, s, images, "iot-collect")
        assert new.value == "192.168.0.161"
        assert testbed.node(new.value).tier is Tier.CLOUD


def test_offload_tie_is_lexicographic(testbed):
    s = store_for(Label("edge-1", "192.168.0.164"))
    images = node_task_image_map(testbed, ["img"])
    new = offload(oom_event("192.168.0.164"), testbed, s, images, "img")
    assert new.value == oracles.best_node([("192.168.0.162", 2048, 1000), ("192.168.0.161", 2048, 1000)])
    assert new.value == "192.168.0.161"


def test_offload_without_cloud_capacity(testbed):
    load(testbed, "192.168.0.161", 1000, 2048)
    load(testbed, "192.168.0.162", 1000, 2048)
    with pytest.raises(NoCloudCapacity):
        offload(oom_event("192.168.0.163"), testbed, store_for(Label("edge-1", "192.168.0.163")),
                node_task_image_map(testbed, ["img"]), "img")


def test_offload_from_cloud_is_rejected(testbed):
    with pytest.raises(NoCloudCapacity):
        offload(oom_event("192.168.0.161"), testbed, store_for(Label("cloud", "192.168.0.161")),
                node_task_image_map(testbed, ["img"]), "img")


def test_label_and_image_maps(testbed):
    labels = cluster_node_label_map(testbed)
    assert labels == {
        "cloud": ["192.168.0.161", "192.168.0.162"],
        "edge-1": ["192.168.0.163", "192.168.0.164"],
        "edge-2": ["192.168.0.165", "192.168.0.166"],
    }
    images = node_task_image_map(testbed, {"a", "b"})
    assert images["192.168.0.161"]["a"].split("/")[1] == "amd64"
    assert images["192.168.0.165"]["b"].split("/")[1] == "arm64"
