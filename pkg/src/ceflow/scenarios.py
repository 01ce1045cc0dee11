"""Scripted single-task recovery scenarios on the bundled testbed.

Each scenario pins a background pod and a waiting competitor onto one edge node
so that the engine's proportional scaling hands the target task a memory grant
below its survival floor. The resulting OOM, recovery, re-allocation and finish
are then driven entirely by the normal simulation kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .engine import EngineConfig
from .formats import default_cluster
from .model import ClusterState, Role, TaskSpec, WorkflowSpec
from .sim import Recovery, SimConfig, Simulator, Strategy, Trace

TARGET_WORKFLOW = "target"


@dataclass(frozen=True)
class ReplayResult:
    trace: Trace
    pod_start_ms: int
    oom_ms: int
    deleted_ms: int
    reallocated_ms: int
    finished_ms: int
    initial: tuple[int, int]  # (cpu, mem)
    reallocated: tuple[int, int]
    from_ip: str
    to_ip: str
    action: str

    def relative(self) -> dict[str, int]:
        """Event times measured from the first start of the target pod."""
        t0 = self.pod_start_ms
        return {
            "oom": self.oom_ms - t0,
            "deleted": self.deleted_ms - t0,
            "reallocated": self.reallocated_ms - t0,
            "finished": self.finished_ms - t0,
        }


def _task(task_id: str, cpu: int, mem: int, mem_min: int, duration: int, volume: int, role: Role,
          scene: str, parents: frozenset[str] = frozenset(), deadline: int = 600_000) -> TaskSpec:
    return TaskSpec(
        task_id=task_id,
        parents=parents,
        data_volume=volume,
        image_id="iot-collect",
        image_size=50_000_000,
        instructions_per_byte=1,
        cpu_request=cpu,
        mem_request=mem,
        mem_min=mem_min,
        duration=duration,
        deadline=deadline,
        role=role,
        scene_hint=scene,
    )


def _single(workflow_id: str, task: TaskSpec) -> WorkflowSpec:
    return WorkflowSpec(workflow_id, task.deadline, (task,))


def _scenario(
    cluster: ClusterState,
    config: SimConfig,
    node_ip: str,
    background: tuple[int, int],
    competitor: tuple[int, int, int],
    target: TaskSpec,
) -> ReplayResult:
    scene = cluster.node(node_ip).scene
    cloud_ip = min(n.ip for n in cluster.nodes.values() if n.scene == cluster.cloud_scene)
    sim = Simulator(cluster, config)

    bg = _task("B", background[0], background[1], 50, 300_000, 1_000_000, Role.EDGE_BOUND, scene)
    sim.pin("background", "B", node_ip)
    sim.inject(_single("background", bg), 0)

    # the competitor waits behind a short cloud task, so it is predicted to
    # start on the node while the target is being evaluated
    parent = _task("P", 100, 100, 50, 5_000, 100_000, Role.CLOUD_BOUND, scene)
    child = _task("C", competitor[0], competitor[1], competitor[2], 10_000, 1_000_000, Role.EDGE_BOUND,
                  scene, frozenset({"P"}))
    sim.pin("competitor", "P", cloud_ip)
    sim.pin("competitor", "C", node_ip)
    sim.inject(WorkflowSpec("competitor", child.deadline, (parent, child)), 1_000)

    sim.pin(TARGET_WORKFLOW, target.task_id, node_ip)
    sim.inject(_single(TARGET_WORKFLOW, target), 1_000)
    trace = sim.run()

    mine = [r for r in trace.records if r.get("workflow_id") == TARGET_WORKFLOW]

    def first(kind: str, **match) -> dict:
        return next(r for r in mine if r["kind"] == kind and all(r.get(k) == v for k, v in match.items()))

    start = first("PodStart", incarnation=0)
    oom = first("OomDetected")
    recovery = first("Recovery")
    deleted = first("PodDeleted")
    regrant = first("AllocationGranted", incarnation=1)
    finished = first("PodFinish")
    return ReplayResult(
        trace=trace,
        pod_start_ms=start["time_ms"],
        oom_ms=oom["time_ms"],
        deleted_ms=deleted["time_ms"],
        reallocated_ms=regrant["time_ms"],
        finished_ms=finished["time_ms"],
        initial=(start["cpu"], start["mem"]),
        reallocated=(regrant["cpu"], regrant["mem"]),
        from_ip=recovery["from_ip"],
        to_ip=recovery["to_ip"],
        action=recovery["action"],
    )


def roam_replay(duration_ms: int = 30_000, cluster: ClusterState | None = None) -> ReplayResult:
    """Edge task granted (400m, 199Mi) against a 220Mi floor, roamed within its scene.

    Re-allocated on the idle sibling node it receives its full (400m, 630Mi).
    With the default latencies the pod is OOM-killed 21 s after starting,
    deleted at 26 s, re-allocated at 33 s and done at 33 s + ``duration_ms``.
    """
    cluster = cluster or default_cluster()
    config = SimConfig(strategy=Strategy.KCES, recovery=Recovery.ROAM)
    target = _task("T9", 400, 630, 200, duration_ms, 10_000_000, Role.EDGE_BOUND, "edge-1")
    # 630 * (2048 - 1448) // (630 + 1269) == 199
    return _scenario(cluster, config, "192.168.0.163", (1000, 1448), (100, 1269, 50), target)


def offload_replay(cluster: ClusterState | None = None) -> ReplayResult:
    """Edge task granted (333m, 45Mi), offloaded to the cloud and re-allocated (400m, 433Mi).

    Latencies follow the observed offloading timeline: OOM 62 s after start,
    deletion 4 s later, re-allocation 16 s after that, and a 15 s run. The
    allocation floor is lowered to 40Mi so the 45Mi grant is launched.
    """
    cluster = cluster or default_cluster()
    config = SimConfig(
        strategy=Strategy.KCES,
        recovery=Recovery.OFFLOAD,
        engine=replace(EngineConfig(), memory_floor=40),
        oom_detection_delay_ms=62_000,
        delete_delay_ms=4_000,
        reallocate_delay_ms=16_000,
    )
    target = _task("T7", 400, 433, 200, 15_000, 5_000_000, Role.EDGE_BOUND, "edge-2")
    # cpu: 400 * (4000 - 3000) // (400 + 801) == 333; mem: 433 * (2048 - 1948) // (433 + 529) == 45
    return _scenario(cluster, config, "192.168.0.165", (3000, 1948), (801, 529, 30), target)
