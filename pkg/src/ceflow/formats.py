"""Line-oriented JSON file formats for clusters and workloads.

Every file starts with a header object naming the format and its version,
followed by one object per line. Blank lines and lines starting with ``#`` are
ignored, so files stay pleasant to edit by hand.

Cluster file::

    {"format": "ceflow-cluster", "version": 1, "cloud_scene": "cloud",
     "scene_pairing": {"edge-1": "cloud"}}
    {"node_id": "node-1", "ip": "10.0.0.1", "tier": "cloud", "scene": "cloud",
     "cpu": 1000, "mem": 2048, "device_bandwidth": 12500000,
     "uplink_bandwidth": 12500000, "image_cache": [], "arch": "amd64"}

A node line with ``"role": "master"`` is accepted and skipped: the control
plane does not carry workload.

Workload file::

    {"format": "ceflow-workload", "version": 1}
    {"workflow_id": "wf-0", "deadline": 600000, "tasks": [{"task_id": "T0", ...}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Iterator

from .model import ClusterState, NodeSpec, Role, TaskSpec, Tier, WorkflowError, WorkflowSpec, validate_workflow

CLUSTER_FORMAT = "ceflow-cluster"
WORKLOAD_FORMAT = "ceflow-workload"
VERSION = 1


class ParseError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None, field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = ":".join(str(x) for x in (path, line) if x is not None)
        detail = f" field {field!r}:" if field else ""
        super().__init__(f"{where}:{detail} {message}" if where else f"{detail} {message}".strip())


@dataclass
class _Line:
    number: int
    obj: dict[str, Any]


def _lines(text: str, path: str | None) -> Iterator[_Line]:
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path, number) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", path, number)
        yield _Line(number, obj)


def _header(lines: Iterator[_Line], fmt: str, path: str | None) -> _Line:
    first = next(lines, None)
    if first is None:
        raise ParseError("empty file", path)
    if first.obj.get("format") != fmt:
        raise ParseError(f"expected format {fmt!r}", path, first.number, "format")
    if first.obj.get("version") != VERSION:
        raise ParseError(f"unsupported version {first.obj.get('version')!r}", path, first.number, "version")
    return first


def _field(line: _Line, name: str, kind: type | tuple[type, ...], path: str | None, default: Any = ...) -> Any:
    if name not in line.obj:
        if default is ...:
            raise ParseError("missing", path, line.number, name)
        return default
    value = line.obj[name]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ParseError(f"expected {getattr(kind, '__name__', kind)}, got {value!r}", path, line.number, name)
    return value


def _rational(line: _Line, name: str, path: str | None) -> Fraction:
    value = _field(line, name, (int, str), path)
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"not a number: {value!r}", path, line.number, name) from None


def _enum(line: _Line, name: str, enum_type, path: str | None, default: Any = ...):
    raw = _field(line, name, str, path, default)
    if raw is default and default is not ...:
        return default
    try:
        return enum_type(raw)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_type)
        raise ParseError(f"{raw!r} is not one of {allowed}", path, line.number, name) from None


# ------------------------------------------------------------------- clusters


def parse_cluster(text: str, path: str | None = None) -> ClusterState:
    lines = _lines(text, path)
    head = _header(lines, CLUSTER_FORMAT, path)
    cloud_scene = _field(head, "cloud_scene", str, path, "cloud")
    pairing = _field(head, "scene_pairing", dict, path, {})
    nodes: list[NodeSpec] = []
    seen: set[str] = set()
    for line in lines:
        if line.obj.get("role") == "master":
            continue
        try:
            node = NodeSpec(
                node_id=_field(line, "node_id", str, path),
                ip=_field(line, "ip", str, path),
                tier=_enum(line, "tier", Tier, path),
                scene=_field(line, "scene", str, path),
                cpu_capacity=_field(line, "cpu", int, path),
                mem_capacity=_field(line, "mem", int, path),
                device_bandwidth=_rational(line, "device_bandwidth", path),
                uplink_bandwidth=_rational(line, "uplink_bandwidth", path),
                image_cache=frozenset(_field(line, "image_cache", list, path, [])),
                arch=_field(line, "arch", str, path, ""),
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), path, line.number) from None
        if node.ip in seen:
            raise ParseError(f"duplicate ip {node.ip}", path, line.number, "ip")
        seen.add(node.ip)
        nodes.append(node)
    if not nodes:
        raise ParseError("cluster has no load-bearing nodes", path)
    return ClusterState.from_nodes(nodes, cloud_scene, pairing)


def _num(x: Fraction) -> int | str:
    return int(x) if x.denominator == 1 else str(x)


def dump_cluster(cluster: ClusterState) -> str:
    head = {
        "format": CLUSTER_FORMAT,
        "version": VERSION,
        "cloud_scene": cluster.cloud_scene,
        "scene_pairing": dict(sorted(cluster.scene_pairing.items())),
    }
    out = [json.dumps(head)]
    for ip in sorted(cluster.nodes):
        n = cluster.nodes[ip]
        out.append(
            json.dumps(
                {
                    "node_id": n.node_id,
                    "ip": n.ip,
                    "tier": n.tier.value,
                    "scene": n.scene,
                    "cpu": n.cpu_capacity,
                    "mem": n.mem_capacity,
                    "device_bandwidth": _num(n.device_bandwidth),
                    "uplink_bandwidth": _num(n.uplink_bandwidth),
                    "image_cache": sorted(n.image_cache),
                    "arch": n.arch,
                }
            )
        )
    return "\n".join(out) + "\n"


def read_cluster(path: str | Path) -> ClusterState:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read: {exc.strerror}", str(p)) from None
    return parse_cluster(text, str(p))


def default_cluster_text() -> str:
    return resources.files("ceflow").joinpath("data/testbed.cluster.jsonl").read_text()


def default_cluster() -> ClusterState:
    return parse_cluster(default_cluster_text(), "<bundled testbed>")


# ------------------------------------------------------------------ workloads


def _task(obj: dict, line: _Line, path: str | None, index: int) -> TaskSpec:
    sub = _Line(line.number, obj)

    def f(name, kind, default=...):
        try:
            return _field(sub, name, kind, path, default)
        except ParseError as exc:
            raise ParseError(str(exc).split(": ", 1)[-1], path, line.number, f"tasks[{index}].{name}") from None

    parents = f("parents", list, [])
    if not all(isinstance(p, str) for p in parents):
        raise ParseError("parents must be strings", path, line.number, f"tasks[{index}].parents")
    try:
        ipb = Fraction(f("instructions_per_byte", (int, str), 1))
        return TaskSpec(
            task_id=f("task_id", str),
            parents=frozenset(parents),
            data_volume=f("data_volume", int),
            image_id=f("image_id", str),
            image_size=f("image_size", int, 0),
            instructions_per_byte=ipb,
            cpu_request=f("cpu_request", int),
            mem_request=f("mem_request", int),
            mem_min=f("mem_min", int),
            duration=f("duration", int),
            deadline=f("deadline", int),
            role=Role(f("role", str)),
            scene_hint=f("scene_hint", str, ""),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc), path, line.number, f"tasks[{index}]") from None


def parse_workload(text: str, path: str | None = None) -> list[WorkflowSpec]:
    lines = _lines(text, path)
    _header(lines, WORKLOAD_FORMAT, path)
    out: list[WorkflowSpec] = []
    for line in lines:
        tasks = _field(line, "tasks", list, path)
        specs = []
        for i, obj in enumerate(tasks):
            if not isinstance(obj, dict):
                raise ParseError("task must be an object", path, line.number, f"tasks[{i}]")
            specs.append(_task(obj, line, path, i))
        wf = WorkflowSpec(_field(line, "workflow_id", str, path), _field(line, "deadline", int, path), tuple(specs))
        try:
            out.append(validate_workflow(wf))
        except WorkflowError as exc:
            raise ParseError(str(exc), path, line.number) from None
    if not out:
        raise ParseError("workload has no workflows", path)
    return out


def dump_workload(workflows: list[WorkflowSpec]) -> str:
    out = [json.dumps({"format": WORKLOAD_FORMAT, "version": VERSION})]
    for wf in workflows:
        tasks = []
        for t in wf.tasks:
            tasks.append(
                {
                    "task_id": t.task_id,
                    "parents": sorted(t.parents),
                    "data_volume": t.data_volume,
                    "image_id": t.image_id,
                    "image_size": t.image_size,
                    "instructions_per_byte": _num(t.instructions_per_byte),
                    "cpu_request": t.cpu_request,
                    "mem_request": t.mem_request,
                    "mem_min": t.mem_min,
                    "duration": t.duration,
                    "deadline": t.deadline,
                    "role": t.role.value,
                    "scene_hint": t.scene_hint,
                }
            )
        out.append(json.dumps({"workflow_id": wf.workflow_id, "deadline": wf.deadline, "tasks": tasks}))
    return "\n".join(out) + "\n"


def read_workload(path: str | Path) -> list[WorkflowSpec]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read: {exc.strerror}", str(p)) from None
    return parse_workload(text, str(p))
