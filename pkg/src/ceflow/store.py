"""In-process key-value store of task records (labels, aliveness, lifecycle windows)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

from .model import Label


class NotFound(KeyError):
    pass


@dataclass
class TaskRecord:
    workflow_id: str
    task_id: str
    labels: Label
    alive: bool = False
    start_ms: int = 0
    lifecycle_end_ms: int = 0
    deadline_ms: int = 0
    allocated_cpu: int = 0
    allocated_mem: int = 0
    image_address: str = ""
    incarnation: int = 0
    cpu_request: int = 0
    mem_request: int = 0

    def __post_init__(self) -> None:
        if self.start_ms > self.lifecycle_end_ms:
            raise ValueError(
                f"{self.workflow_id}/{self.task_id}: start {self.start_ms} after lifecycle end {self.lifecycle_end_ms}"
            )

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.workflow_id, self.task_id, self.incarnation)


class TaskStore:
    """Holds every incarnation of every injected task.

    Records are addressed by ``(workflow_id, task_id, incarnation)``; the most
    recent incarnation of a task is its *current* record.
    """

    def __init__(self) -> None:
        self._records: dict[tuple[str, str, int], TaskRecord] = {}
        self._current: dict[tuple[str, str], int] = {}
        self.puts = 0
        self.deletes = 0

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TaskRecord]:
        return iter(self._records.values())

    def put_record(self, rec: TaskRecord) -> None:
        if rec.start_ms > rec.lifecycle_end_ms:
            raise ValueError(f"{rec.key}: start after lifecycle end")
        if rec.key not in self._records:
            self.puts += 1
        self._records[rec.key] = rec
        tkey = (rec.workflow_id, rec.task_id)
        if rec.incarnation >= self._current.get(tkey, -1):
            self._current[tkey] = rec.incarnation

    def get(self, workflow_id: str, task_id: str, incarnation: int | None = None) -> TaskRecord:
        if incarnation is None:
            try:
                incarnation = self._current[(workflow_id, task_id)]
            except KeyError:
                raise NotFound(f"{workflow_id}/{task_id}") from None
        try:
            return self._records[(workflow_id, task_id, incarnation)]
        except KeyError:
            raise NotFound(f"{workflow_id}/{task_id}#{incarnation}") from None

    def delete(self, workflow_id: str, task_id: str, incarnation: int) -> None:
        key = (workflow_id, task_id, incarnation)
        if key not in self._records:
            raise NotFound(f"{workflow_id}/{task_id}#{incarnation}")
        del self._records[key]
        self.deletes += 1
        tkey = (workflow_id, task_id)
        if self._current.get(tkey) == incarnation:
            rest = [k[2] for k in self._records if k[:2] == tkey]
            if rest:
                self._current[tkey] = max(rest)
            else:
                del self._current[tkey]

    def new_incarnation(self, workflow_id: str, task_id: str, **changes) -> TaskRecord:
        """Copy the current record into a fresh, not-yet-alive incarnation."""
        cur = self.get(workflow_id, task_id)
        fields = dict(alive=False, allocated_cpu=0, allocated_mem=0, incarnation=cur.incarnation + 1)
        fields.update(changes)
        rec = replace(cur, **fields)
        self.put_record(rec)
        return rec

    def pending_on_node(self, label: Label, window: tuple[int, int]) -> list[TaskRecord]:
        """Not-yet-alive records carrying ``label`` whose start lies in the closed window."""
        lo, hi = window
        if lo > hi:
            raise ValueError(f"invalid window [{lo}, {hi}]")
        return [
            r
            for r in self._records.values()
            if not r.alive and r.labels == label and lo <= r.start_ms <= hi
        ]

    def update_label(
        self,
        workflow_id: str,
        task_id: str,
        new_label: Label,
        new_image_address: str | None = None,
    ) -> TaskRecord:
        rec = self.get(workflow_id, task_id)
        rec.labels = new_label
        if new_image_address is not None:
            rec.image_address = new_image_address
        return rec

    def dump(self) -> list[dict]:
        out = []
        for r in sorted(self._records.values(), key=lambda r: r.key):
            out.append(
                {
                    "workflow_id": r.workflow_id,
                    "task_id": r.task_id,
                    "incarnation": r.incarnation,
                    "label": str(r.labels),
                    "alive": r.alive,
                    "start_ms": r.start_ms,
                    "lifecycle_end_ms": r.lifecycle_end_ms,
                    "deadline_ms": r.deadline_ms,
                    "allocated_cpu": r.allocated_cpu,
                    "allocated_mem": r.allocated_mem,
                    "image_address": r.image_address,
                }
            )
        return out
