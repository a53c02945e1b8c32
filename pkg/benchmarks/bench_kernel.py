"""Compiled kernel vs pure-Python fallback.

    python benchmarks/bench_kernel.py [--repeat 3]

Each workload runs on both backends; the table lists the best wall time,
the speedup and the largest state difference between the two runs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fowlerlab.fowler import PiecewiseSystem
from fowlerlab.integrate import EventSpec, compiled_available, integrate
from fowlerlab.manifolds import equilibrium_targets
from fowlerlab.params import ProblemConfig

COR1 = ProblemConfig(n=5, eta=0, K1=-1, K2=1, q1=4, q2=4)


def radial_solve(backend):
    sys_ = PiecewiseSystem.from_config(COR1)
    spec = EventSpec(targets=equilibrium_targets(sys_.side2), target_side=2)
    return integrate(sys_, (1e-7, 0.0, -16.0), 1, 216.0, spec, backend=backend)


def spiral(backend):
    side = PiecewiseSystem.from_config(COR1).side2
    return integrate(side, (1e-7, -2e-7, 0.0), -1, 1e4, EventSpec(max_arclength=1e3), backend=backend)


def long_orbit(backend):
    # Hamiltonian side (l = 2^*, K > 0): a closed orbit integrated for many periods
    cfg = ProblemConfig(n=5, eta=0, K1=1, K2=-1, q1=10 / 3, q2=4)
    side = PiecewiseSystem.from_config(cfg).side1
    return integrate(side, (0.5, 0.0, 0.0), 1, 2000.0, EventSpec(axes=False), backend=backend)


WORKLOADS = {"radial solve (cor1)": radial_solve, "spiral trace, s+ side 2": spiral,
             "periodic orbit, t=2000": long_orbit}


def best_time(fn, backend, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not compiled_available():
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'workload':28s} {'steps':>7s} {'compiled':>10s} {'python':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in WORKLOADS.items():
        tc, rc = best_time(fn, "compiled", args.repeat)
        tp, rp = best_time(fn, "python", args.repeat)
        n = min(len(rc.t), len(rp.t))
        diff = float(np.max(np.abs(np.column_stack([rc.x[:n] - rp.x[:n], rc.y[:n] - rp.y[:n]]))))
        print(f"{name:28s} {len(rc.t):7d} {tc * 1e3:8.2f}ms {tp * 1e3:8.2f}ms {tp / tc:7.1f}x {diff:9.1e}")


if __name__ == "__main__":
    main()
