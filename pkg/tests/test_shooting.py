import math

import numpy as np
import pytest
import radial_oracle as oracle
from support import BASELINE_RTOL, CONFIGS, ORACLE, report, system

from fowlerlab.errors import DomainError, RegimeError, SeedOverflow
from fowlerlab.fowler import PiecewiseSystem, Side
from fowlerlab.params import ProblemConfig, critical_exponents, derive_exponent_set
from fowlerlab.shooting import (
    SolutionClass,
    count_nondegenerate_zeros,
    find_structure,
    kelvin_dual,
    log_rate_fit,
    scaling_report,
    seed_bound,
    seed_scaling_error,
    solve_radial,
    structure_theorem,
    transversality,
)


def _oracle_dict(cfg: ProblemConfig) -> dict:
    return {k: float(getattr(cfg, k)) if k != "n" else cfg.n
            for k in ("n", "eta", "K1", "K2", "q1", "q2", "delta1", "delta2")}


# ---------------------------------------------------------------- small pieces


def test_transversality_value(cor1):
    # equal alphas, eta = 0: only the reaction terms survive, -K1 g(1) + K2 g(1)
    sys = PiecewiseSystem.from_config(cor1)
    assert transversality((1.0, 0.0), sys) == pytest.approx(2.0, rel=1e-15)


def test_transversality_identical_sides():
    side = Side.power(derive_exponent_set(5, 0.5, 3.5), 1.0)
    sys = PiecewiseSystem(side, side)
    for Q in [(0.3, -1.2), (2.0, 0.7), (-1.0, 4.0)]:
        assert transversality(Q, sys) == pytest.approx(0.0, abs=1e-13)


def test_solution_class_label():
    c = SolutionClass("R", "sd", 2)
    assert c.label == "(R, sd, 2)"
    with pytest.raises(ValueError):
        SolutionClass("R", "sd", -1)


def test_structure_theorem_variants(cor1, cor2):
    assert structure_theorem(PiecewiseSystem.from_config(cor1), "D") == "main1bis"
    assert structure_theorem(PiecewiseSystem.from_config(cor2), "L") == "main2bis"
    with pytest.raises(RegimeError):
        structure_theorem(PiecewiseSystem.from_config(cor1), "L")


def test_regime_error_subcritical_outer():
    # l2 = 3 < 2^* = 10/3 on the outer side: no D-structure
    sys = PiecewiseSystem.from_config(ProblemConfig(n=5, eta=0, K1=-1, K2=1, q1=3, q2=3))
    with pytest.raises(RegimeError, match="2\\^\\*"):
        find_structure(sys, 1, "D")


def test_bad_k_max(cor1):
    with pytest.raises(ValueError):
        find_structure(PiecewiseSystem.from_config(cor1), -1, "D")


# ---------------------------------------------------------------- radial solves


@pytest.mark.parametrize("d,label", [(0.5, "(R, sd, 0)"), (1.0, "(R, sd, 0)"), (1.7, "(R, sd, 1)"),
                                     (2.0, "(R, sd, 2)")])
def test_solve_radial_classes(cor1, d, label):
    traj, cls = solve_radial(PiecewiseSystem.from_config(cor1), d)
    assert cls.label == label
    assert cls.d == d
    assert count_nondegenerate_zeros(traj) == cls.zeros


def test_solve_radial_negation_symmetry(cor1):
    sys = PiecewiseSystem.from_config(cor1)
    tp, cp = solve_radial(sys, 1.7)
    tm, cm = solve_radial(sys, -1.7)
    assert (cp.origin, cp.infinity, cp.zeros) == (cm.origin, cm.infinity, cm.zeros)
    for t in np.linspace(tp.t_start + 1, min(tp.t_end, tm.t_end) - 1, 25):
        a, b = tp.at(t), tm.at(t)
        assert a[0] == pytest.approx(-b[0], rel=1e-8, abs=1e-14)
        assert a[1] == pytest.approx(-b[1], rel=1e-8, abs=1e-14)


def test_seed_overflow_beyond_bound(cor1):
    sys = PiecewiseSystem.from_config(cor1)
    bound = seed_bound(sys)
    assert bound == pytest.approx(3.0501851946301533, rel=1e-8)
    with pytest.raises(SeedOverflow):
        solve_radial(sys, 1.05 * bound)
    solve_radial(sys, 0.95 * bound)


def test_seed_bound_against_oracle(cor1):
    bound = seed_bound(PiecewiseSystem.from_config(cor1))
    cfg = _oracle_dict(cor1)
    assert oracle.classify_d(cfg, 1.001 * bound) is None
    assert oracle.classify_d(cfg, 0.999 * bound) is not None


def test_solve_radial_rejects_zero_seed(cor1):
    with pytest.raises(DomainError):
        solve_radial(PiecewiseSystem.from_config(cor1), 0.0)


def test_zero_count_monotone_in_seed(cor1):
    sys = PiecewiseSystem.from_config(cor1)
    counts = [solve_radial(sys, d)[1].zeros for d in np.linspace(0.1, 2.4, 40)]
    assert counts == sorted(counts)
    assert counts[0] == 0 and counts[-1] >= 3


@pytest.mark.parametrize("name,family", [("cor1", "D"), ("cor1", "L"), ("cor2", "D"), ("cor2", "L")])
def test_seed_scaling_law(name, family):
    assert seed_scaling_error(system(name), family) < 1e-10


def test_library_profile_matches_oracle(cor1):
    # near-side u(r) for d = 1 against a direct radial solve
    sys = PiecewiseSystem.from_config(cor1)
    traj, _ = solve_radial(sys, 1.0)
    s = np.linspace(-8.0, -0.01, 30)
    ref = oracle.profile(_oracle_dict(cor1), "D", 1.0, s)
    for si, ui in zip(s, ref):
        st = traj.at(si)
        u = sys.to_radial(st[0], st[1], si).u
        assert u == pytest.approx(ui, rel=1e-8)


# ---------------------------------------------------------------- structure


@pytest.mark.parametrize("name", list(ORACLE))
def test_structure_against_oracle(name):
    rep = report(name)
    values = rep.values()
    assert len(values) == len(ORACLE[name])
    for v, ref in zip(values, ORACLE[name]):
        assert v == pytest.approx(ref, rel=BASELINE_RTOL)
    assert values == sorted(values)
    for k, seed in enumerate(rep.seeds):
        assert seed["zeros"] == k
        assert seed["verified"]


@pytest.mark.parametrize("name", ["cor1", "hardy"])
def test_oracle_flips_at_seeds(name):
    # the oracle changes class across each computed D_k
    cfg = _oracle_dict(CONFIGS[name][0])
    for v in report(name).values():
        lo = oracle.classify_d(cfg, v * (1 - 1e-7))
        hi = oracle.classify_d(cfg, v * (1 + 1e-7))
        assert lo is not None and hi is not None
        assert lo != hi


def test_oracle_flips_at_L_seeds():
    cfg = _oracle_dict(CONFIGS["cor2"][0])
    for v in report("cor2").values():
        assert oracle.classify_L(cfg, v * (1 - 1e-7)) != oracle.classify_L(cfg, v * (1 + 1e-7))


def test_structure_classes(cor1):
    rep = report("cor1")
    assert [s["class"] for s in rep.seeds] == ["(R, fd, 0)", "(R, fd, 1)", "(R, fd, 2)"]
    for k, iv in enumerate(rep.intervals):
        assert iv["classes"] == [f"(R, sd, {k})"]
    assert rep.theorem == "main1bis"


def test_cor2_classes():
    rep = report("cor2")
    assert [s["class"] for s in rep.seeds] == ["(R, fd, 0)", "(R, fd, 1)"]
    assert rep.intervals[0]["classes"] == ["(S, fd, 0)"]


def test_kelvin_dual_maps_L_to_D(cor2):
    dual = kelvin_dual(cor2)
    assert (dual.K1, dual.K2) == (cor2.K2, cor2.K1)
    rep = find_structure(PiecewiseSystem.from_config(dual), 1, "D")
    for a, b in zip(rep.values(), report("cor2").values()):
        assert a == pytest.approx(b, rel=1e-8)


def test_kelvin_dual_involution():
    cfg = ProblemConfig(n=5, eta=0.5, K1=1, K2=-1, q1=3, q2=3.5, delta1=0.2, delta2=-0.1, rho=2.0)
    back = kelvin_dual(kelvin_dual(cfg))
    for k in ("K1", "K2", "q1", "q2", "delta1", "delta2", "rho"):
        assert getattr(back, k) == pytest.approx(getattr(cfg, k), rel=1e-15)


def test_hardy_fd_exponents():
    # n - 2 - kappa(1) with kappa(1) = (3 - sqrt 5) / 2
    target = 3 - (3 - math.sqrt(5)) / 2
    for s in report("hardy").seeds:
        assert s["fd_exponent"] == pytest.approx(target, abs=1e-3)


def test_log_rate_fit_ignores_time_offset():
    # x = (t - t1)^(-p): the fitted exponent must not depend on the offset t1
    from types import SimpleNamespace

    t = np.linspace(0.0, 900.0, 2000)
    for t1 in (-40.0, -5.0, -0.5):
        tr = SimpleNamespace(t=t, x=(t - t1) ** -0.25, t_start=0.0)
        assert log_rate_fit(tr, 50.0) == pytest.approx(-0.25, rel=1e-4)


def test_log_corrected_tail_at_critical_exponent():
    q = critical_exponents(5, 1.0).I_eta
    cfg = ProblemConfig(n=5, eta=1, K1=-1, K2=1, q1=4, q2=q)
    sys = PiecewiseSystem.from_config(cfg)
    for d in (0.25, 1.0):
        traj, cls = solve_radial(sys, d, horizon=1000)
        assert cls.infinity_rate == "log-corrected"
        assert log_rate_fit(traj) == pytest.approx(-1 / (q - 2), rel=0.01)


# ---------------------------------------------------------------- scaling of maxima


def test_scaling_report_needs_equal_q():
    cfg = ProblemConfig(n=5, eta=0, K1=-1, K2=1, q1=3.5, q2=4)
    with pytest.raises(DomainError):
        scaling_report(cfg, 4, 2)


def test_scaling_report_from_structure():
    chk = scaling_report(report("cor1"), 4.0, 2.0)
    assert max(chk.errors.values()) < 1e-6
    assert chk.profile_error < 1e-6
    assert chk.factor == pytest.approx((2.0**2 * 4.0) ** -0.5)
