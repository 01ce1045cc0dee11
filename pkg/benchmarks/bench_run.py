"""Wall-clock timing of full simulation runs on the bundled testbed.

    python3 benchmarks/bench_run.py [--repeat N]
"""

from __future__ import annotations

import argparse
import statistics
import time

from ceflow.cli import ExperimentConfig, iot_workload, load_cluster
from ceflow.sim import run

CASES = {
    "constant N=10 b=2": dict(pattern="constant", batch=2, total=10),
    "linear N=10": dict(pattern="linear", k=1, d=1, total=10),
    "pyramid N=17": dict(pattern="pyramid", peak=3, total=17),
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cluster = load_cluster()
    for name, pattern in CASES.items():
        cfg = ExperimentConfig(**pattern)
        for strategy in ("kces", "fcfs"):
            times = []
            for seed in range(1, args.repeat + 1):
                t0 = time.perf_counter()
                trace = run(cluster, iot_workload, cfg.schedule(), strategy, "roam", seed, cfg.sim_config(strategy))
                times.append(time.perf_counter() - t0)
            print(f"{name:<20} {strategy:<5} {statistics.median(times) * 1000:8.1f} ms/run  "
                  f"({len(trace.records)} trace records)")


if __name__ == "__main__":
    main()
