"""Evaluation metrics computed from a finished trace, plus strategy comparison."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .model import ClusterState
from .sim import Trace


class IncompleteTrace(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RecoveryLifecycle:
    workflow_id: str
    task_id: str
    kind: str
    start_ms: int
    end_ms: int

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class RunSummary:
    total_duration_ms: int
    avg_workflow_duration_ms: float
    cpu_usage_mean: float
    mem_usage_mean: float
    roam_count: int
    offload_count: int
    roam_pct: float
    offload_pct: float
    success_rate: float
    workflows: int
    tasks: int
    oom_count: int
    recoveries: tuple[RecoveryLifecycle, ...] = ()
    config: dict = field(default_factory=dict, compare=False)

    @property
    def total_duration_min(self) -> float:
        return round(self.total_duration_ms / 60_000, 1)

    @property
    def avg_workflow_duration_min(self) -> float:
        return round(self.avg_workflow_duration_ms / 60_000, 1)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["recoveries"] = [asdict(r) for r in self.recoveries]
        out["total_duration_min"] = self.total_duration_min
        out["avg_workflow_duration_min"] = self.avg_workflow_duration_min
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> RunSummary:
        data = {k: v for k, v in raw.items() if k not in ("total_duration_min", "avg_workflow_duration_min")}
        data["recoveries"] = tuple(RecoveryLifecycle(**r) for r in data.get("recoveries", ()))
        return cls(**data)


def _pod_key(r: dict) -> tuple[str, str, int]:
    return (r["workflow_id"], r["task_id"], r["incarnation"])


def _capacity(trace: Trace, cluster: ClusterState | None) -> tuple[int, int]:
    if cluster is not None:
        nodes = cluster.nodes.values()
        return sum(n.cpu_capacity for n in nodes), sum(n.mem_capacity for n in nodes)
    nodes = trace.header["nodes"].values()
    return sum(n["cpu"] for n in nodes), sum(n["mem"] for n in nodes)


def summarize(trace: Trace, cluster: ClusterState | None = None) -> RunSummary:
    """Reduce a complete trace to the headline metrics.

    Usage is the time integral of allocated cpu (memory) held by live pods,
    divided by whole-cluster capacity times the total duration. A pod holds its
    allocation from grant until it finishes or is OOM-killed.
    """
    if not trace.records or trace.records[-1]["kind"] != "RunEnd":
        raise IncompleteTrace("trace does not end with a RunEnd record")
    arrivals = trace.of_kind("WorkflowArrival")
    cfg = trace.header.get("config", {})
    if not arrivals:
        return RunSummary(0, 0.0, 0.0, 0.0, 0, 0, 0.0, 0.0, 1.0, 0, 0, 0, (), cfg)

    first_arrival = min(r["time_ms"] for r in arrivals)
    ends = trace.of_kind("PodFinish", "PodDeleted")
    last_end = max((r["time_ms"] for r in ends), default=first_arrival)
    total = last_end - first_arrival

    # per-workflow span: first pod start to last pod end
    first_start: dict[str, int] = {}
    last_pod_end: dict[str, int] = {}
    for r in trace.records:
        if r["kind"] == "PodStart":
            first_start.setdefault(r["workflow_id"], r["time_ms"])
        elif r["kind"] in ("PodFinish", "PodDeleted"):
            last_pod_end[r["workflow_id"]] = r["time_ms"]
    spans = [last_pod_end[w] - first_start[w] for w in first_start if w in last_pod_end]
    avg = sum(spans) / len(spans) if spans else 0.0

    # allocation integrals
    cpu_cap, mem_cap = _capacity(trace, cluster)
    held: dict[tuple, tuple[int, int, int]] = {}
    cpu_int = mem_int = 0
    for r in trace.records:
        if r["kind"] == "AllocationGranted":
            held[_pod_key(r)] = (r["time_ms"], r["cpu"], r["mem"])
        elif r["kind"] in ("PodFinish", "OomDetected"):
            t0, c, m = held.pop(_pod_key(r))
            cpu_int += c * (r["time_ms"] - t0)
            mem_int += m * (r["time_ms"] - t0)
    if held:
        raise IncompleteTrace(f"{len(held)} pods still hold resources at the end of the trace")
    cpu_usage = float(Fraction(cpu_int, cpu_cap * total)) if total else 0.0
    mem_usage = float(Fraction(mem_int, mem_cap * total)) if total else 0.0

    n_tasks = sum(r["tasks"] for r in arrivals)
    recoveries = trace.of_kind("Recovery")
    roams = sum(1 for r in recoveries if r["action"] == "roam")
    offloads = sum(1 for r in recoveries if r["action"] == "offload")
    done = trace.of_kind("WorkflowDone")
    succeeded = sum(1 for r in done if r["status"] == "succeeded")

    # recovery lifecycle: first OOM of a task to its eventual successful finish
    first_oom: dict[tuple[str, str], tuple[int, str]] = {}
    lifecycles: list[RecoveryLifecycle] = []
    for r in trace.records:
        key = (r.get("workflow_id"), r.get("task_id"))
        if r["kind"] == "OomDetected":
            first_oom.setdefault(key, (r["time_ms"], ""))
        elif r["kind"] == "Recovery" and key in first_oom and not first_oom[key][1]:
            first_oom[key] = (first_oom[key][0], r["action"])
        elif r["kind"] == "PodFinish" and key in first_oom:
            start, kind = first_oom.pop(key)
            lifecycles.append(RecoveryLifecycle(key[0], key[1], kind, start, r["time_ms"]))

    return RunSummary(
        total_duration_ms=total,
        avg_workflow_duration_ms=avg,
        cpu_usage_mean=cpu_usage,
        mem_usage_mean=mem_usage,
        roam_count=roams,
        offload_count=offloads,
        roam_pct=100.0 * roams / n_tasks,
        offload_pct=100.0 * offloads / n_tasks,
        success_rate=succeeded / len(arrivals),
        workflows=len(arrivals),
        tasks=n_tasks,
        oom_count=len(trace.of_kind("OomDetected")),
        recoveries=tuple(lifecycles),
        config=cfg,
    )


def usage_series(trace: Trace, cluster: ClusterState | None = None, step_ms: int = 1000) -> list[dict]:
    """Per-step cluster cpu/mem usage fractions and cumulative workflow requests."""
    cpu_cap, mem_cap = _capacity(trace, cluster)
    changes: list[tuple[int, int, int, int]] = []  # time, dcpu, dmem, dreq
    held: dict[tuple, tuple[int, int]] = {}
    for r in trace.records:
        if r["kind"] == "AllocationGranted":
            held[_pod_key(r)] = (r["cpu"], r["mem"])
            changes.append((r["time_ms"], r["cpu"], r["mem"], 0))
        elif r["kind"] in ("PodFinish", "OomDetected"):
            c, m = held.pop(_pod_key(r))
            changes.append((r["time_ms"], -c, -m, 0))
        elif r["kind"] == "WorkflowArrival":
            changes.append((r["time_ms"], 0, 0, 1))
    if not changes:
        return []
    end = max(t for t, *_ in changes)
    rows = []
    cpu = mem = req = 0
    i = 0
    for t in range(0, end + step_ms, step_ms):
        while i < len(changes) and changes[i][0] <= t:
            cpu += changes[i][1]
            mem += changes[i][2]
            req += changes[i][3]
            i += 1
        rows.append({"time_s": t // 1000, "cpu_usage": cpu / cpu_cap, "mem_usage": mem / mem_cap, "requests": req})
    return rows


def series_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["time_s", "cpu_usage", "mem_usage", "requests"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "cpu_usage": f"{row['cpu_usage']:.6f}", "mem_usage": f"{row['mem_usage']:.6f}"})
    return buf.getvalue()


METRICS = (
    "total_duration_ms",
    "avg_workflow_duration_ms",
    "cpu_usage_mean",
    "mem_usage_mean",
    "roam_count",
    "offload_count",
    "success_rate",
)


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float  # population
    n: int


def aggregate(values: Sequence[float]) -> Aggregate:
    if not values:
        raise ValueError("nothing to aggregate")
    mu = math.fsum(values) / len(values)
    var = math.fsum((v - mu) ** 2 for v in values) / len(values)
    return Aggregate(mu, math.sqrt(var), len(values))


def aggregate_summaries(summaries: Sequence[RunSummary]) -> dict[str, Aggregate]:
    return {m: aggregate([float(getattr(s, m)) for s in summaries]) for m in METRICS}


@dataclass(frozen=True)
class MetricDelta:
    metric: str
    a: float
    b: float

    @property
    def delta(self) -> float:
        return self.a - self.b

    @property
    def relative(self) -> float:
        """Fractional change of ``a`` against ``b`` (negative means ``a`` is lower)."""
        return 0.0 if self.b == 0 else (self.a - self.b) / self.b


@dataclass(frozen=True)
class ComparisonReport:
    label_a: str
    label_b: str
    deltas: tuple[MetricDelta, ...]

    def get(self, metric: str) -> MetricDelta:
        return next(d for d in self.deltas if d.metric == metric)


_COMPARABLE_KEYS = ("beta", "memory_floor", "cpu_min", "millicore_throughput", "instructions_per_millicore")


def compare(a: RunSummary, b: RunSummary, label_a: str = "a", label_b: str = "b") -> ComparisonReport:
    if a.workflows != b.workflows or a.tasks != b.tasks:
        raise ConfigMismatch(f"workloads differ: {a.workflows}/{a.tasks} vs {b.workflows}/{b.tasks}")
    for key in _COMPARABLE_KEYS:
        if key in a.config and key in b.config and a.config[key] != b.config[key]:
            raise ConfigMismatch(f"{key}: {a.config[key]} vs {b.config[key]}")
    return ComparisonReport(
        label_a, label_b, tuple(MetricDelta(m, float(getattr(a, m)), float(getattr(b, m))) for m in METRICS)
    )


def table_report(results: dict[tuple[str, str], Sequence[RunSummary]]) -> str:
    """Strategy x pattern grid of mean (std) values, one block per metric.

    ``results`` maps ``(strategy, pattern)`` to the summaries of every seed.
    """
    strategies = sorted({s for s, _ in results})
    patterns = sorted({p for _, p in results})
    rows = [
        ("Total workflow duration (min)", "total_duration_ms", 1 / 60_000, 1),
        ("Average workflow duration (min)", "avg_workflow_duration_ms", 1 / 60_000, 1),
        ("CPU usage", "cpu_usage_mean", 1, 3),
        ("Memory usage", "mem_usage_mean", 1, 3),
        ("Roaming events", "roam_count", 1, 1),
        ("Offloading events", "offload_count", 1, 1),
        ("Success rate", "success_rate", 1, 3),
    ]
    header = ["metric", "strategy", *patterns]
    lines = [" | ".join(header), " | ".join("---" for _ in header)]
    for title, attr, scale, digits in rows:
        for strat in strategies:
            cells = [title, strat]
            for pat in patterns:
                runs = results.get((strat, pat))
                if not runs:
                    cells.append("-")
                    continue
                agg = aggregate([float(getattr(r, attr)) * scale for r in runs])
                cells.append(f"{agg.mean:.{digits}f} ({agg.std:.{digits}f})")
            lines.append(" | ".join(cells))
    return "\n".join(lines) + "\n"
