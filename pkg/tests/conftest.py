from __future__ import annotations

from fractions import Fraction

import pytest

from ceflow.formats import default_cluster
from ceflow.model import ClusterState, NodeSpec, Role, TaskSpec, Tier


def make_task(task_id: str = "T", **kw) -> TaskSpec:
    fields = dict(
        task_id=task_id,
        parents=frozenset(),
        data_volume=1_000_000,
        image_id="img",
        image_size=10_000_000,
        instructions_per_byte=Fraction(1),
        cpu_request=400,
        mem_request=630,
        mem_min=200,
        duration=30_000,
        deadline=600_000,
        role=Role.EDGE_BOUND,
        scene_hint="edge-1",
    )
    fields.update(kw)
    return TaskSpec(**fields)


def make_node(ip: str, tier: Tier = Tier.EDGE, scene: str = "edge-1", cpu: int = 4000, mem: int = 2048, **kw) -> NodeSpec:
    fields = dict(
        node_id=f"n{ip.rsplit('.', 1)[-1]}",
        ip=ip,
        tier=tier,
        scene=scene,
        cpu_capacity=cpu,
        mem_capacity=mem,
        device_bandwidth=Fraction(12_500_000),
        uplink_bandwidth=Fraction(12_500_000),
    )
    fields.update(kw)
    return NodeSpec(**fields)


@pytest.fixture
def testbed() -> ClusterState:
    return default_cluster()


@pytest.fixture
def small_cluster() -> ClusterState:
    return ClusterState.from_nodes(
        [
            make_node("10.0.0.1", Tier.CLOUD, "cloud", 1000, 2048),
            make_node("10.0.0.2", Tier.CLOUD, "cloud", 1000, 2048),
            make_node("10.0.0.3"),
            make_node("10.0.0.4"),
            make_node("10.0.0.5", scene="edge-2"),
        ]
    )
