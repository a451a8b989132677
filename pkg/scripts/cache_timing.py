#!/usr/bin/env python3
"""Measure commit latency with and without the contribution cache.

Sweeps the federation size and reports the median latency of a cached
asynchronous commit (constant in the number of learners) against the full
recompute pass (linear). Prints one row per federation size.
"""

import argparse
import gc
import time

import numpy as np

from fedsim.controller import FederationController, UpdateRequest
from fedsim.nn import ParameterSet


def make_models(entry_dim: int, count: int = 8) -> list[ParameterSet]:
    rng = np.random.default_rng(0)
    return [
        ParameterSet(
            [
                ("W1", rng.normal(size=(entry_dim, entry_dim))),
                ("W2", rng.normal(size=(entry_dim, entry_dim))),
            ]
        )
        for _ in range(count)
    ]


def bench(n_learners: int, models: list[ParameterSet], updates: int) -> tuple[float, float]:
    ctrl = FederationController.from_initial_model(models[0])
    for lid in range(n_learners):
        ctrl.handle_async_update(
            UpdateRequest(lid, models[lid % len(models)], 1, 1), lambda r: 1.0
        )
    gc.collect()
    gc.disable()
    try:
        cached = []
        for i in range(updates):
            req = UpdateRequest(i % n_learners, models[i % len(models)], 1, 1)
            t0 = time.perf_counter()
            ctrl.handle_async_update(req, lambda r: 1.0)
            cached.append(time.perf_counter() - t0)
        full = []
        for _ in range(max(5, updates // 20)):
            t0 = time.perf_counter()
            ctrl.audit_recompute()
            full.append(time.perf_counter() - t0)
    finally:
        gc.enable()
    return float(np.median(cached)), float(np.median(full))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 100, 500, 1000])
    parser.add_argument("--entry-dim", type=int, default=64)
    parser.add_argument("--updates", type=int, default=400)
    args = parser.parse_args()

    models = make_models(args.entry_dim)
    print(f"{'learners':>8s}  {'cached commit':>14s}  {'full recompute':>14s}")
    for n in args.sizes:
        cached, full = bench(n, models, args.updates)
        print(f"{n:8d}  {cached * 1e6:12.1f}us  {full * 1e6:12.1f}us")


if __name__ == "__main__":
    main()
