"""Shared test helpers: the reference configs, cached structure reports and
the oracle baselines.

The baselines were produced by ``tests/oracles/radial_oracle.py`` (a direct
scipy solve of the radial equation, scanned at step 1e-3 and bisected to
1e-13 relative) and are frozen here.
"""

from __future__ import annotations

from functools import lru_cache

from fowlerlab.fowler import PiecewiseSystem
from fowlerlab.params import ProblemConfig
from fowlerlab.shooting import find_structure

CONFIGS = {
    "cor1": (ProblemConfig(n=5, eta=0, K1=-1, K2=1, q1=4, q2=4), "D", 2),
    "hardy": (ProblemConfig(n=5, eta=1, K1=-1, K2=1, q1=4, q2=4), "D", 2),
    "cor2": (ProblemConfig(n=5, eta=0, K1=1, K2=-1, q1=3, q2=3), "L", 1),
}

ORACLE = {
    "cor1": (1.5438055121626229, 1.949916846329999, 2.181613079704855),
    "hardy": (1.1536061835307174, 1.4210394520426761, 1.5554051138277845),
    "cor2": (1.913193022047012, 2.7543450898254926),
}

BASELINE_RTOL = 1e-8


def system(name: str) -> PiecewiseSystem:
    return PiecewiseSystem.from_config(CONFIGS[name][0])


@lru_cache(maxsize=None)
def report(name: str):
    cfg, family, k_max = CONFIGS[name]
    return find_structure(PiecewiseSystem.from_config(cfg), k_max, family)
