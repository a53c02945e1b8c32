"""Acceptance suite: twelve end-to-end criteria, one check function each.

Each check returns ``(ok, detail)``.  Under pytest the result is recorded for
the terminal summary and asserted; ``python tests/test_acceptance.py`` prints
the same pass/fail lines without pytest.
"""

from __future__ import annotations

import math
import os
import sys
import tempfile

import numpy as np
import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
for p in (HERE, os.path.join(HERE, "oracles")):
    if p not in sys.path:
        sys.path.insert(0, p)

import radial_oracle as oracle  # noqa: E402
from scipy.optimize import curve_fit  # noqa: E402
from support import BASELINE_RTOL, CONFIGS, ORACLE, report, system  # noqa: E402

from fowlerlab.cli import run_command  # noqa: E402
from fowlerlab.config import from_dict  # noqa: E402
from fowlerlab.fowler import PiecewiseSystem, Side  # noqa: E402
from fowlerlab.integrate import EventSpec, integrate  # noqa: E402
from fowlerlab.manifolds import equilibria  # noqa: E402
from fowlerlab.params import ProblemConfig, Regime, critical_exponents, derive_exponent_set  # noqa: E402
from fowlerlab.shooting import (  # noqa: E402
    log_rate_fit,
    scaling_report,
    seed_scaling_error,
    solve_radial,
    transversality,
)

RNG_SEED = 20240611


def _oracle_cfg(cfg: ProblemConfig) -> dict:
    return {"n": cfg.n, **{k: float(getattr(cfg, k)) for k in ("eta", "K1", "K2", "q1", "q2", "delta1", "delta2")}}


# ---------------------------------------------------------------- 1. exponent algebra


def check_exponent_algebra():
    rng = np.random.default_rng(RNG_SEED)
    worst = 0.0
    mismatches = 0
    skipped = 0
    for _ in range(1000):
        n = int(rng.integers(3, 13))
        eta = float(rng.uniform(-10.0, 0.999 * (n - 2) ** 2 / 4))
        q = float(rng.uniform(2.05, 15.0))
        delta = float(rng.uniform(-1.9, 6.0))
        e = derive_exponent_set(n, eta, q, delta)
        scale = max(1.0, abs(e.lam), abs(e.Lam))
        worst = max(worst, abs(e.lam + e.Lam - (e.alpha + e.gamma)) / scale,
                    abs(e.lam * e.Lam - (e.alpha * e.gamma + eta)) / scale**2)
        for m in (e.kappa, n - 2 - e.kappa):
            worst = max(worst, abs(m * m - (n - 2) * m + eta) / max(1.0, (n - 2) ** 2))
        if e.critical_proximity():
            skipped += 1
            continue
        by_regime = e.regime is Regime.SADDLE
        by_det = e.alpha * e.gamma + eta < 0
        by_window = e.serrin < e.l < e.I_eta
        mismatches += not (by_regime == by_det == by_window)
    ok = worst <= 1e-12 and mismatches == 0
    return ok, f"1000 sets, worst identity error {worst:.1e}, saddle mismatches {mismatches} ({skipped} near-critical skipped)"


# ---------------------------------------------------------------- 2. hamiltonian


def check_hamiltonian():
    side = Side.power(derive_exponent_set(5, 0.0, 10 / 3, 0.0), 1.0)
    P = next(e for e in equilibria(side) if e.kind == "P+")
    start = (1.3 * P.x, P.y)
    probe = integrate(side, (*start, 0.0), 1, 60.0, EventSpec(axes=False, lines=((0.0, 1.0, P.y),)))
    ups = [e.t for e in probe.events if e.kind == "line" and e.direction > 0]
    periods = np.diff(ups)
    T = float(np.mean(periods))
    tr = integrate(side, (*start, 0.0), 1, 10 * T, EventSpec(axes=False))
    E = tr.energy()
    drift = float(np.max(np.abs(E - E[0])))
    closure = math.hypot(tr.x[-1] - start[0], tr.y[-1] - start[1])
    ok = drift < 1e-8 and closure < 1e-6 and E[0] < 0
    return ok, f"period {T:.10f}, drift {drift:.1e} over 10 periods, closure {closure:.1e}"


# ---------------------------------------------------------------- 3. energy monotonicity


def check_energy_monotone():
    n, eta = 5, 1.0
    c = critical_exponents(n, eta)
    panels = {
        "l<2_*": (2.2, c.serrin - 0.05),
        "2_*<l<2^*": (c.serrin + 0.05, c.sobolev - 0.05),
        "2^*<l<I": (c.sobolev + 0.05, c.I_eta - 0.05),
        "l>I": (c.I_eta + 0.05, 12.0),
    }
    rng = np.random.default_rng(RNG_SEED + 3)
    parts = []
    ok = True
    for name, (lo, hi) in panels.items():
        bad = 0
        steps = 0
        for _ in range(50):
            side = Side.power(derive_exponent_set(n, eta, float(rng.uniform(lo, hi)), 0.0), 1.0)
            x0, y0 = rng.uniform(-2.0, 2.0, size=2)
            tr = integrate(side, (float(x0), float(y0), 0.0), 1, 10.0, EventSpec(axes=False))
            dE = np.diff(tr.energy())
            sgn = math.copysign(1.0, side.alpha + side.gamma)
            bad += int(np.sum((sgn * dE < 0) & (np.abs(dE) >= 1e-8)))
            steps += dE.size
        ok &= bad == 0
        parts.append(f"{name}: {bad}/{steps}")
    return ok, "violations above 1e-8: " + ", ".join(parts)


# ---------------------------------------------------------------- 4. equilibria


def check_equilibria():
    worst = 0.0
    worst_abs = 0.0  # over |P| <= 10, where an absolute bound is meaningful
    table_errors = 0
    cases = 0
    for n in (3, 4, 5, 8):
        for frac in (-1.0, 0.0, 0.2, 0.9):
            eta = frac * (n - 2) ** 2 / 4 if frac > 0 else frac
            c = critical_exponents(n, eta)
            for K in (1.0, -1.0):
                for l in np.linspace(2.1, 12.0, 23):
                    side = Side.power(derive_exponent_set(n, eta, float(l), 0.0), K)
                    eqs = equilibria(side)
                    kinds = {e.kind for e in eqs}
                    inside = c.serrin < l < c.I_eta
                    expect = (K > 0 and inside) or (K < 0 and (l < c.serrin or l > c.I_eta))
                    table_errors += ({"P+", "P-"} <= kinds) != expect
                    for e in eqs:
                        if e.kind == "origin":
                            continue
                        # |P| reaches 1e25 near l = 2, so the residual is taken relative to the
                        # largest term of the field
                        res = math.hypot(*side.field(e.x, e.y))
                        terms = (side.alpha * e.x, e.y, side.eta * e.x, side.gamma * e.y, side.K * side.g(e.x))
                        worst = max(worst, res / max(abs(v) for v in terms))
                        if math.hypot(e.x, e.y) <= 10:
                            worst_abs = max(worst_abs, res)
                    cases += 1
    ok = worst < 1e-12 and table_errors == 0
    return ok, (f"{cases} cases, max |f(P)| / term scale {worst:.1e} (absolute {worst_abs:.1e} where |P| <= 10), "
                f"existence-table mismatches {table_errors}")


# ---------------------------------------------------------------- 5. seed scaling


def _oracle_scaling(cfg: ProblemConfig, family: str) -> float:
    """The scaling law checked on direct radial solves at seeds 1 and 2."""
    oc = _oracle_cfg(cfg)
    n = cfg.n
    kappa = oracle._kappa(oc)
    if family == "D":
        alpha = 2.0 / (cfg.q1 - 2)
        mu = alpha - kappa
        s = np.linspace(-8.0, -0.01 - math.log(2) / mu, 40)
    else:
        alpha = 2.0 / (cfg.q2 - 2)
        mu = alpha + 2 - n + kappa
        s = np.linspace(0.01 - math.log(2) / mu, 8.0, 40)
    u2 = oracle.profile(oc, family, 2.0, s)
    u1 = oracle.profile(oc, family, 1.0, s + math.log(2) / mu)
    return float(np.max(np.abs(2 ** (alpha / mu) * u1 - u2) / np.abs(u2)))


def _library_vs_oracle(cfg: ProblemConfig, family: str, seed: float) -> float:
    sys_ = PiecewiseSystem.from_config(cfg)
    traj, _ = solve_radial(sys_, seed, family)
    # near side only, inside the integrated span
    s = np.linspace(max(-8.0, traj.t_start + 0.5), -0.01, 30) if family == "D" else \
        np.linspace(0.01, min(8.0, traj.t_start - 0.5), 30)
    ref = oracle.profile(_oracle_cfg(cfg), family, seed, s)
    u = np.array([sys_.to_radial(*traj.at(si)[:2], si).u for si in s])
    return float(np.max(np.abs(u - ref) / np.abs(ref)))


def check_seed_scaling():
    cfg = CONFIGS["cor1"][0]
    sys_ = system("cor1")
    parts = []
    worst = 0.0
    for fam in ("D", "L"):
        lib = seed_scaling_error(sys_, fam)
        ref = _oracle_scaling(cfg, fam)
        cross = max(_library_vs_oracle(cfg, fam, 1.0), _library_vs_oracle(cfg, fam, 2.0))
        worst = max(worst, lib, ref, cross)
        parts.append(f"{fam}: library {lib:.1e}, direct solve {ref:.1e}, library vs direct {cross:.1e}")
    return worst < 1e-6, "; ".join(parts)


# ---------------------------------------------------------------- 6, 7, 9. structure


def _baseline_error(name: str) -> float:
    vals = report(name).values()
    ref = ORACLE[name]
    if len(vals) != len(ref):
        return math.inf
    return max(abs(v - r) / r for v, r in zip(vals, ref))


def _probe_labels(name: str, lo: float, hi: float, count: int = 20) -> set[str]:
    cfg, family, _ = CONFIGS[name]
    sys_ = PiecewiseSystem.from_config(cfg)
    seeds = lo + (hi - lo) * (np.arange(count) + 0.5) / count
    return {solve_radial(sys_, float(v), family)[1].label for v in seeds}


def _d_structure(name: str) -> tuple[bool, str]:
    rep = report(name)
    vals = rep.values()
    err = _baseline_error(name)
    zeros = [s["zeros"] for s in rep.seeds]
    verified = all(s["verified"] for s in rep.seeds)
    classes = [s["class"] for s in rep.seeds]
    p0 = _probe_labels(name, 0.0, vals[0])
    p1 = _probe_labels(name, vals[0], vals[1])
    ok = (
        len(vals) == 3 and vals == sorted(vals) and zeros == [0, 1, 2] and verified
        and classes == ["(R, fd, 0)", "(R, fd, 1)", "(R, fd, 2)"]
        and p0 == {"(R, sd, 0)"} and p1 == {"(R, sd, 1)"} and err <= BASELINE_RTOL
    )
    detail = (f"D = {', '.join(f'{v:.12f}' for v in vals)}; oracle rel err {err:.1e}; zeros {zeros}; "
              f"probes (0,D0) {sorted(p0)}, (D0,D1) {sorted(p1)}")
    return ok, detail


def check_cor1():
    return _d_structure("cor1")


def check_cor2():
    rep = report("cor2")
    vals = rep.values()
    err = _baseline_error("cor2")
    zeros = [s["zeros"] for s in rep.seeds]
    classes = [s["class"] for s in rep.seeds]
    probes = _probe_labels("cor2", 0.0, vals[0])
    ok = (
        len(vals) == 2 and vals == sorted(vals) and zeros == [0, 1]
        and all(c.split(", ")[1] == "fd" for c in classes) and all(s["verified"] for s in rep.seeds)
        and probes == {"(S, fd, 0)"} and err <= BASELINE_RTOL
    )
    return ok, (f"L = {', '.join(f'{v:.12f}' for v in vals)}; oracle rel err {err:.1e}; zeros {zeros}; "
                f"classes {classes}; probes (0,L0) {sorted(probes)}")


def check_hardy():
    ok, detail = _d_structure("hardy")
    c = critical_exponents(5, 1.0)
    target = 5 - 2 - c.kappa
    fd = [s["fd_exponent"] for s in report("hardy").seeds]
    fd_err = max(abs(e - target) for e in fd)
    thresholds = (abs(c.kappa - 0.381966) < 1e-6 and abs(c.serrin - 2.763932) < 1e-6
                  and abs(c.I_eta - 7.236068) < 1e-6)
    ok = ok and fd_err < 1e-3 and thresholds
    return ok, (f"{detail}; fd exponent error {fd_err:.1e} vs {target:.6f}; "
                f"kappa {c.kappa:.6f}, 2_* {c.serrin:.6f}, I {c.I_eta:.6f}")


# ---------------------------------------------------------------- 8. intersections


def check_intersections():
    rep = report("cor1")
    sys_ = system("cor1")
    s1, s2 = sys_.side1, sys_.side2
    e1, e2 = s1.exps, s2.exps
    Qs = sorted((q for q in rep.intersections if q["first"]), key=lambda q: q["j"])
    ok = [q["j"] for q in Qs] == [0, 1, 2] and e1.l <= e2.l <= e2.I_eta
    parts = []
    for q in Qs:
        lo, hi = q["theta_window"]
        j = q["j"]
        window = (-(j + 1) * math.pi, -j * math.pi)
        in_window = lo < q["theta"] < hi and (lo, hi) == pytest.approx(window)
        parity = q["branch"] == ("s+" if j % 2 == 0 else "s-")
        # <f1, J f2> from the two fields directly, J the rotation by +pi/2
        f1, f2 = s1.field(q["x"], q["y"]), s2.field(q["x"], q["y"])
        cross = f1[1] * f2[0] - f1[0] * f2[1]
        lib = transversality((q["x"], q["y"]), sys_)
        transverse = cross > 0 and abs(cross - lib) <= 1e-12 * abs(cross)
        ok = ok and in_window and parity and transverse and not q["reentry"]
        parts.append(f"Q{j} theta {q['theta']:.4f} in ({lo:.4f}, {hi:.4f}), {q['branch']}, "
                     f"transversality {cross:.4g}, reentry {q['reentry']}")
    return ok, "; ".join(parts)


# ---------------------------------------------------------------- 10. log correction


def check_log_correction():
    q = critical_exponents(5, 1.0).I_eta
    cfg = ProblemConfig(n=5, eta=1.0, K1=-1.0, K2=1.0, q1=4.0, q2=q)
    expected = -1.0 / (q - 2)
    traj, cls = solve_radial(PiecewiseSystem.from_config(cfg), 1.0, horizon=1000.0)
    lib = log_rate_fit(traj)
    # independent fit of ln|x| = c - p ln(t - t1) on the far side, t = ln r
    sel = (traj.t >= 50.0) & (traj.t <= 1000.0)
    t, lx = traj.t[sel], np.log(np.abs(traj.x[sel]))
    popt, _ = curve_fit(lambda tt, c, p, t1: c - p * np.log(tt - t1), t, lx, p0=(0.0, 0.2, 0.0),
                        bounds=([-50.0, 0.0, -1e3], [50.0, 5.0, 49.0]))
    fit = -float(popt[1])
    err = max(abs(lib - expected), abs(fit - expected)) / abs(expected)
    ok = cls.infinity == "sd" and cls.infinity_rate == "log-corrected" and err <= 0.10
    return ok, (f"l2 = I(1) = {q:.6f}: class {cls.label} {cls.infinity_rate}; exponent library {lib:.5f}, "
                f"direct fit {fit:.5f}, expected {expected:.5f} (rel err {err:.1e})")


# ---------------------------------------------------------------- 11. scaling of maxima


def check_scaling_maxima():
    chk = scaling_report(report("cor1"), 4.0, 2.0)
    worst = max(chk.errors.values())
    ok = worst < 1e-6
    e = chk.errors
    return ok, (f"(Kbar, rhobar) = (4, 2): R0 {e['R0']:.1e}, U0 {e['U0']:.1e}, D0 {e['D0']:.1e}; "
                f"equation residual {chk.residual:.1e}, profile {chk.profile_error:.1e}")


# ---------------------------------------------------------------- 12. determinism


def check_determinism():
    cfg = CONFIGS["cor1"][0]
    run = from_dict({"n": cfg.n, "eta": float(cfg.eta), "K1": float(cfg.K1), "K2": float(cfg.K2),
                     "q1": float(cfg.q1), "q2": float(cfg.q2), "k_max": 2, "format": "both"})
    names = ("structure.json", "seeds.csv", "intersections.csv")
    with tempfile.TemporaryDirectory() as tmp:
        blobs = []
        for sub in ("a", "b"):
            out = os.path.join(tmp, sub)
            run_command("structure", run, out)
            blobs.append([open(os.path.join(out, n), "rb").read() for n in names])
    same = blobs[0] == blobs[1]
    size = sum(len(b) for b in blobs[0])
    return same, f"two structure runs, {size} bytes in {len(names)} files, identical: {same}"


CHECKS = {
    1: check_exponent_algebra,
    2: check_hamiltonian,
    3: check_energy_monotone,
    4: check_equilibria,
    5: check_seed_scaling,
    6: check_cor1,
    7: check_cor2,
    8: check_intersections,
    9: check_hardy,
    10: check_log_correction,
    11: check_scaling_maxima,
    12: check_determinism,
}


@pytest.mark.parametrize("k", sorted(CHECKS), ids=[f"criterion{k:02d}" for k in sorted(CHECKS)])
def test_criterion(k):
    from conftest import ACCEPTANCE

    ok, detail = CHECKS[k]()
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k, fn in CHECKS.items():
        ok, detail = fn()
        failed += not ok
        print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(1 if failed else 0)
