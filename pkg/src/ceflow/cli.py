"""Experiment configuration, orchestration and the ``ceflow`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import formats
from .engine import EngineConfig
from .injector import (
    ArrivalSchedule,
    IotWorkflowParams,
    build_iot_workflow,
    constant_schedule,
    linear_schedule,
    pyramid_schedule,
)
from .metrics import RunSummary, compare, summarize, series_csv, table_report, usage_series
from .model import ClusterState, WorkflowSpec
from .sim import InvariantViolation, Nonterminating, Recovery, SimConfig, Strategy, run
from .timing import TimingModel

log = logging.getLogger("ceflow")

OUTPUT_ENV = "CEFLOW_OUTPUT_DIR"
PATTERNS = ("constant", "linear", "pyramid")


class ConfigError(ValueError):
    pass


def bundled_defaults() -> dict:
    return json.loads(resources.files("ceflow").joinpath("data/defaults.json").read_text())


def load_cluster(path: str | Path | None = None) -> ClusterState:
    """Read a cluster file; ``None`` selects the bundled six-node testbed."""
    if path is None:
        return formats.default_cluster()
    return formats.read_cluster(path)


def _default(key: str):
    return field(default_factory=lambda: bundled_defaults()[key])


@dataclass
class ExperimentConfig:
    cluster: str | None = None
    workload: str | None = None
    pattern: str = "constant"
    batch: int = 2
    total: int = 10
    k: int = 1
    d: int = 1
    peak: int = 3
    strategies: list[str] = field(default_factory=lambda: ["kces", "fcfs"])
    recovery: str = "roam"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    interval_ms: int = _default("interval_ms")
    oom_detection_delay_ms: int = _default("oom_detection_delay_ms")
    delete_delay_ms: int = _default("delete_delay_ms")
    reallocate_delay_ms: int = _default("reallocate_delay_ms")
    beta: int = _default("beta")
    memory_floor: int = _default("memory_floor")
    cpu_min: int = _default("cpu_min")
    millicore_throughput: int = _default("millicore_throughput")
    instructions_per_millicore: int = _default("instructions_per_millicore")
    event_budget: int = _default("event_budget")
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_ENV, "ceflow-out"))

    def validate(self) -> ExperimentConfig:
        problems = []
        for path_field in ("cluster", "workload"):
            value = getattr(self, path_field)
            if value is not None and not Path(value).is_file():
                problems.append(f"{path_field} file not found: {value}")
        if self.pattern not in PATTERNS:
            problems.append(f"pattern must be one of {', '.join(PATTERNS)}")
        if not self.seeds:
            problems.append("at least one seed is required")
        if not self.strategies:
            problems.append("at least one strategy is required")
        for s in self.strategies:
            if s not in {x.value for x in Strategy}:
                problems.append(f"unknown strategy {s!r}")
        if self.recovery not in {x.value for x in Recovery}:
            problems.append(f"unknown recovery {self.recovery!r}")
        for name in (
            "batch", "total", "k", "d", "peak", "interval_ms", "oom_detection_delay_ms", "delete_delay_ms",
            "reallocate_delay_ms", "memory_floor", "cpu_min", "millicore_throughput",
            "instructions_per_millicore", "event_budget",
        ):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.beta < 0:
            problems.append("beta must be non-negative")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    def schedule(self) -> ArrivalSchedule:
        if self.pattern == "constant":
            return constant_schedule(self.batch, self.total, self.interval_ms)
        if self.pattern == "linear":
            return linear_schedule(self.k, self.d, self.total, self.interval_ms)
        return pyramid_schedule(self.peak, self.total, self.interval_ms)

    def sim_config(self, strategy: str) -> SimConfig:
        return SimConfig(
            strategy=Strategy(strategy),
            recovery=Recovery(self.recovery),
            engine=EngineConfig(beta=self.beta, cpu_min=self.cpu_min, memory_floor=self.memory_floor),
            timing=TimingModel(Fraction(self.millicore_throughput), Fraction(self.instructions_per_millicore)),
            oom_detection_delay_ms=self.oom_detection_delay_ms,
            delete_delay_ms=self.delete_delay_ms,
            reallocate_delay_ms=self.reallocate_delay_ms,
            event_budget=self.event_budget,
        )


def iot_workload(index: int, seed: int) -> WorkflowSpec:
    return build_iot_workflow(f"wf-{index}", IotWorkflowParams(), seed)


def _workloads(cfg: ExperimentConfig):
    if cfg.workload is None:
        return iot_workload
    return formats.read_workload(cfg.workload)


@dataclass
class RunResult:
    strategy: str
    seed: int
    stem: str
    summary: RunSummary | None = None
    error: str | None = None


def _run_one(cfg: ExperimentConfig, strategy: str, seed: int) -> RunResult:
    stem = f"{cfg.pattern}-{strategy}-seed{seed}"
    out = Path(cfg.output_dir)
    try:
        cluster = load_cluster(cfg.cluster)
        trace = run(cluster, _workloads(cfg), cfg.schedule(), strategy, cfg.recovery, seed, cfg.sim_config(strategy))
        summary = summarize(trace, cluster)
    except (Nonterminating, InvariantViolation) as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            (out / f"{stem}.trace.jsonl").write_text(trace.to_jsonl())
        return RunResult(strategy, seed, stem, error=f"{type(exc).__name__}: {exc}")
    (out / f"{stem}.trace.jsonl").write_text(trace.to_jsonl())
    (out / f"{stem}.summary.json").write_text(json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n")
    (out / f"{stem}.series.csv").write_text(series_csv(usage_series(trace, cluster)))
    return RunResult(strategy, seed, stem, summary)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> int:
    """Run every strategy x seed, write artifacts, and return a process exit code."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    tasks = [(s, seed) for s in cfg.strategies for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(partial(_run_one, cfg), *zip(*tasks)))
    else:
        results = [_run_one(cfg, s, seed) for s, seed in tasks]

    failed = [r for r in results if r.error]
    for r in failed:
        log.error("run %s failed: %s", r.stem, r.error)
    grid: dict[tuple[str, str], list[RunSummary]] = {}
    for r in results:
        if r.summary is not None:
            grid.setdefault((r.strategy, cfg.pattern), []).append(r.summary)
    (out / "report.md").write_text(table_report(grid))

    by_key = {(r.strategy, r.seed): r.summary for r in results if r.summary is not None}
    comparisons = []
    if len(cfg.strategies) >= 2:
        a, b = cfg.strategies[:2]
        for seed in cfg.seeds:
            if (a, seed) in by_key and (b, seed) in by_key:
                rep = compare(by_key[(a, seed)], by_key[(b, seed)], a, b)
                comparisons.append(
                    {
                        "seed": seed,
                        "a": a,
                        "b": b,
                        "deltas": {d.metric: {"a": d.a, "b": d.b, "delta": d.delta, "relative": d.relative}
                                   for d in rep.deltas},
                    }
                )
        (out / "comparison.json").write_text(json.dumps(comparisons, indent=2, sort_keys=True) + "\n")
    return 1 if failed else 0


# ------------------------------------------------------------------ argparse


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ceflow", description="Cloud-edge workflow scheduling simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment and write traces, summaries and reports")
    r.add_argument("--config", help="JSON experiment config; flags override its values")
    r.add_argument("--cluster", help="cluster file (default: bundled testbed)")
    r.add_argument("--workload", help="workload file (default: generated IoT workflow)")
    r.add_argument("--pattern", choices=PATTERNS)
    r.add_argument("--batch", type=int, help="constant pattern: workflows per burst")
    r.add_argument("--total", type=int, help="total workflows to inject")
    r.add_argument("--k", type=int, help="linear pattern: increment per burst")
    r.add_argument("--d", type=int, help="linear pattern: first burst size")
    r.add_argument("--peak", type=int, help="pyramid pattern: peak burst size")
    r.add_argument("--interval-ms", type=int)
    r.add_argument("--strategy", action="append", choices=[s.value for s in Strategy], dest="strategies")
    r.add_argument("--recovery", choices=[x.value for x in Recovery])
    r.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",") if x], help="comma-separated")
    r.add_argument("--oom-detection-delay-ms", type=int)
    r.add_argument("--delete-delay-ms", type=int)
    r.add_argument("--reallocate-delay-ms", type=int)
    r.add_argument("--beta", type=int)
    r.add_argument("--memory-floor", type=int)
    r.add_argument("--millicore-throughput", type=int)
    r.add_argument("--output-dir", help=f"default: ${OUTPUT_ENV} or ./ceflow-out")
    r.add_argument("--jobs", type=int, default=1, help="parallel runs")

    e = sub.add_parser("export-cluster", help="write the bundled testbed cluster file")
    e.add_argument("path", nargs="?", help="destination (default: stdout)")

    w = sub.add_parser("export-workload", help="write a generated IoT workload file")
    w.add_argument("--count", type=int, default=1)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("path", nargs="?")

    s = sub.add_parser("summarize", help="summarize a trace file")
    s.add_argument("trace")
    s.add_argument("--cluster")
    return p


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = ExperimentConfig.from_json(Path(args.config).read_text()) if args.config else ExperimentConfig()
            overrides = {
                f.name: getattr(args, f.name)
                for f in fields(ExperimentConfig)
                if getattr(args, f.name, None) is not None
            }
            cfg = replace(cfg, **overrides)
            code = run_experiment(cfg, args.jobs)
            print(Path(cfg.output_dir, "report.md").read_text(), end="")
            return code
        if args.command == "export-cluster":
            _emit(formats.default_cluster_text(), args.path)
            return 0
        if args.command == "export-workload":
            wfs = [iot_workload(i, args.seed) for i in range(args.count)]
            _emit(formats.dump_workload(wfs), args.path)
            return 0
        if args.command == "summarize":
            from .sim import Trace

            trace = Trace.from_jsonl(Path(args.trace).read_text())
            cluster = load_cluster(args.cluster) if args.cluster else None
            print(json.dumps(summarize(trace, cluster).as_dict(), indent=2, sort_keys=True))
            return 0
    except (ConfigError, formats.ParseError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
