"""Workflow arrival patterns and the 21-task IoT workflow instance."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .model import Role, TaskSpec, WorkflowSpec, validate_workflow
from .timing import DEFAULT_INSTRUCTIONS_PER_MILLICORE

DEFAULT_INTERVAL_MS = 300_000


class IndivisibleTotal(ValueError):
    pass


@dataclass(frozen=True)
class Burst:
    time_ms: int
    count: int


@dataclass(frozen=True)
class ArrivalSchedule:
    bursts: tuple[Burst, ...]
    total: int

    def __post_init__(self) -> None:
        times = [b.time_ms for b in self.bursts]
        if any(b >= a for a, b in zip(times[1:], times)):
            raise ValueError("burst times must be strictly increasing")
        if any(b.count < 1 for b in self.bursts):
            raise ValueError("burst counts must be >= 1")
        if sum(b.count for b in self.bursts) != self.total:
            raise ValueError("burst counts do not sum to total")

    @property
    def sizes(self) -> list[int]:
        return [b.count for b in self.bursts]

    @classmethod
    def from_sizes(cls, sizes: list[int], interval_ms: int) -> ArrivalSchedule:
        return cls(tuple(Burst(i * interval_ms, n) for i, n in enumerate(sizes)), sum(sizes))


def constant_schedule(batch: int, total: int, interval_ms: int = DEFAULT_INTERVAL_MS) -> ArrivalSchedule:
    if batch < 1 or total < 1:
        raise ValueError("batch and total must be positive")
    if total % batch:
        raise IndivisibleTotal(f"total {total} is not a multiple of batch {batch}")
    return ArrivalSchedule.from_sizes([batch] * (total // batch), interval_ms)


def _truncate(sizes, total: int) -> list[int]:
    out: list[int] = []
    left = total
    for n in sizes:
        if left <= 0:
            break
        out.append(min(n, left))
        left -= out[-1]
    return out


def _linear_sizes(k: int, d: int):
    n = d
    while True:
        yield n
        n += k


def linear_schedule(k: int, d: int, total: int, interval_ms: int = DEFAULT_INTERVAL_MS) -> ArrivalSchedule:
    """Burst sizes d, d+k, d+2k, ...; the last burst is cut so the sizes sum to ``total``."""
    if k < 1 or d < 1:
        raise ValueError("linear pattern needs k >= 1 and d >= 1")
    if total < 1:
        raise ValueError("total must be positive")
    return ArrivalSchedule.from_sizes(_truncate(_linear_sizes(k, d), total), interval_ms)


def _pyramid_sizes(peak: int):
    yield 1
    while True:
        yield from range(2, peak + 1)
        yield from range(peak - 1, 0, -1)


def pyramid_schedule(peak: int, total: int, interval_ms: int = DEFAULT_INTERVAL_MS) -> ArrivalSchedule:
    """Sizes climb 1..peak, fall back to 1 and repeat; the last burst is cut to hit ``total``."""
    if peak < 2:
        raise ValueError("pyramid pattern needs peak >= 2")
    if total < 1:
        raise ValueError("total must be positive")
    return ArrivalSchedule.from_sizes(_truncate(_pyramid_sizes(peak), total), interval_ms)


@dataclass(frozen=True)
class TaskProfile:
    cpu_request: int
    mem_request: int
    mem_min: int
    duration: int
    data_volume: int
    image_id: str
    image_size: int = 50_000_000


# Requests are over-provisioned in the same proportion on both resources:
# 1400m/700Mi is roughly a third of an edge node's 4000m/2048Mi.
DEFAULT_PROFILES: dict[str, TaskProfile] = {
    "deploy": TaskProfile(500, 1024, 200, 30_000, 4_000_000, "wf-deploy"),
    "collect": TaskProfile(1400, 700, 200, 40_000, 14_500_000, "iot-collect"),
    "process": TaskProfile(1400, 700, 200, 40_000, 14_500_000, "iot-process"),
    "analyze": TaskProfile(500, 1024, 200, 30_000, 4_000_000, "iot-analyze"),
    "decide": TaskProfile(500, 1024, 200, 30_000, 4_000_000, "iot-decide"),
}


@dataclass(frozen=True)
class IotWorkflowParams:
    """Shape and resource profile of the layered IoT workflow.

    ``layout`` maps each edge scene to the number of tasks it contributes to the
    four edge layers: (first collection, first processing, second collection,
    second processing).
    """

    layout: Mapping[str, tuple[int, int, int, int]] = field(
        default_factory=lambda: {"edge-1": (4, 2, 2, 1), "edge-2": (3, 2, 2, 2)}
    )
    profiles: Mapping[str, TaskProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    deadline_slack: int = 4
    jitter: float = 0.15  # relative spread of data volumes across seeds
    cloud_scene_hint: str = "edge-1"


def build_iot_workflow(
    workflow_id: str,
    params: IotWorkflowParams | None = None,
    seed: int | None = None,
) -> WorkflowSpec:
    params = params or IotWorkflowParams()
    for scene, sizes in params.layout.items():
        if len(sizes) != 4 or min(sizes) < 1:
            raise ValueError(f"scene {scene}: need four positive layer sizes, got {sizes}")
    rng = random.Random(f"{seed}:{workflow_id}") if seed is not None else None

    specs: list[tuple[str, str, Role, str, list[str]]] = []  # id, kind, role, scene, parents
    counter = iter(range(10**6))

    def new_id() -> str:
        return f"T{next(counter)}"

    root = new_id()
    specs.append((root, "deploy", Role.CLOUD_BOUND, params.cloud_scene_hint, []))

    def edge_segment(head: str, first: int) -> list[str]:
        tails: list[str] = []
        for scene, sizes in params.layout.items():
            collectors = [new_id() for _ in range(sizes[first])]
            for tid in collectors:
                specs.append((tid, "collect", Role.EDGE_BOUND, scene, [head]))
            processors = [new_id() for _ in range(sizes[first + 1])]
            for tid in processors:
                specs.append((tid, "process", Role.EDGE_BOUND, scene, list(collectors)))
            tails.extend(processors)
        return tails

    tails = edge_segment(root, 0)
    middle = new_id()
    specs.append((middle, "analyze", Role.CLOUD_BOUND, params.cloud_scene_hint, tails))
    tails = edge_segment(middle, 2)
    sink = new_id()
    specs.append((sink, "decide", Role.CLOUD_BOUND, params.cloud_scene_hint, tails))

    # deadlines: slack times the nominal earliest finish along the DAG
    finish: dict[str, int] = {}
    for tid, kind, _, _, parents in specs:
        start = max((finish[p] for p in parents), default=0)
        finish[tid] = start + params.profiles[kind].duration
    wf_deadline = params.deadline_slack * finish[sink]

    tasks = []
    for tid, kind, role, scene, parents in specs:
        prof = params.profiles[kind]
        volume = prof.data_volume
        if rng is not None and params.jitter:
            volume = int(volume * (1 + rng.uniform(-params.jitter, params.jitter)))
        ipb = Fraction(prof.cpu_request * DEFAULT_INSTRUCTIONS_PER_MILLICORE, max(volume, 1))
        tasks.append(
            TaskSpec(
                task_id=tid,
                parents=frozenset(parents),
                data_volume=volume,
                image_id=prof.image_id,
                image_size=prof.image_size,
                instructions_per_byte=ipb,
                cpu_request=prof.cpu_request,
                mem_request=prof.mem_request,
                mem_min=prof.mem_min,
                duration=prof.duration,
                deadline=wf_deadline if tid == sink else params.deadline_slack * finish[tid],
                role=role,
                scene_hint=scene,
            )
        )
    return validate_workflow(WorkflowSpec(workflow_id, wf_deadline, tuple(tasks)))
