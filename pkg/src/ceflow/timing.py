"""Execution-time and resource-requirement formulas for edge and cloud placement.

Every division rounds up to a whole millisecond (or millicore), which keeps the
estimates conservative with respect to deadlines. Arithmetic is exact: rational
inputs go through :class:`fractions.Fraction` and only the final ceiling turns
them into integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import NodeSpec, TaskSpec, Tier

# bytes processed per millicore-second
DEFAULT_MILLICORE_THROUGHPUT = 1000
# instructions one millicore retires per second
DEFAULT_INSTRUCTIONS_PER_MILLICORE = 1000


class ZeroAllocation(ValueError):
    pass


@dataclass(frozen=True)
class ExecutionEstimate:
    compute_ms: int = 0
    device_transfer_ms: int = 0
    uplink_transfer_ms: int = 0
    image_transfer_ms: int = 0

    @property
    def total_ms(self) -> int:
        return (
            self.compute_ms
            + self.device_transfer_ms
            + self.uplink_transfer_ms
            + self.image_transfer_ms
        )


def ceil_div(num: Fraction | int, den: Fraction | int) -> int:
    # ints and Fractions both expose numerator/denominator; stay in integers
    a = num.numerator * den.denominator
    b = num.denominator * den.numerator
    if b == 0:
        raise ZeroDivisionError("ceil_div by zero")
    if b < 0:
        a, b = -a, -b
    return -(-a // b)


def required_cpu(
    task: TaskSpec, instructions_per_millicore: Fraction | int = DEFAULT_INSTRUCTIONS_PER_MILLICORE
) -> int:
    """Millicores needed to process the task's data: instructions/byte times bytes."""
    return max(1, ceil_div(task.instructions_per_byte * task.data_volume, instructions_per_millicore))


def _transfer_ms(volume: int, bandwidth: Fraction) -> int:
    return ceil_div(volume * 1000, bandwidth)


def _compute_ms(volume: int, allocated_cpu: int, throughput: Fraction | int) -> int:
    if allocated_cpu <= 0:
        raise ZeroAllocation("allocated cpu must be positive")
    return ceil_div(volume * 1000, allocated_cpu * throughput)


def edge_execution_time(
    task: TaskSpec,
    node: NodeSpec,
    allocated_cpu: int,
    throughput: Fraction | int = DEFAULT_MILLICORE_THROUGHPUT,
) -> ExecutionEstimate:
    if node.tier is not Tier.EDGE:
        raise ValueError(f"{node.node_id} is not an edge node")
    compute = _compute_ms(task.data_volume, allocated_cpu, throughput)
    image = 0 if task.image_id in node.image_cache else _transfer_ms(task.image_size, node.uplink_bandwidth)
    return ExecutionEstimate(
        compute_ms=compute,
        device_transfer_ms=_transfer_ms(task.data_volume, node.device_bandwidth),
        image_transfer_ms=image,
    )


def cloud_execution_time(
    task: TaskSpec,
    edge_gateway: NodeSpec,
    allocated_cpu: int,
    throughput: Fraction | int = DEFAULT_MILLICORE_THROUGHPUT,
) -> ExecutionEstimate:
    """Device data reaches the cloud through the scene's edge gateway; no image pull."""
    if edge_gateway.tier is not Tier.EDGE:
        raise ValueError(f"{edge_gateway.node_id} is not an edge gateway")
    return ExecutionEstimate(
        compute_ms=_compute_ms(task.data_volume, allocated_cpu, throughput),
        device_transfer_ms=_transfer_ms(task.data_volume, edge_gateway.device_bandwidth),
        uplink_transfer_ms=_transfer_ms(task.data_volume, edge_gateway.uplink_bandwidth),
    )


def meets_deadline(est: ExecutionEstimate, task: TaskSpec) -> bool:
    return est.total_ms <= task.deadline


@dataclass(frozen=True)
class TimingModel:
    """Binds the formulas to a cluster: picks the edge or cloud model by node tier."""

    throughput: Fraction | int = DEFAULT_MILLICORE_THROUGHPUT
    instructions_per_millicore: Fraction | int = DEFAULT_INSTRUCTIONS_PER_MILLICORE

    def estimate(self, task: TaskSpec, node: NodeSpec, allocated_cpu: int, gateway: NodeSpec) -> ExecutionEstimate:
        if node.tier is Tier.EDGE:
            return edge_execution_time(task, node, allocated_cpu, self.throughput)
        return cloud_execution_time(task, gateway, allocated_cpu, self.throughput)

    def runtime_ms(self, task: TaskSpec, est: ExecutionEstimate) -> int:
        return max(task.duration, est.total_ms)
