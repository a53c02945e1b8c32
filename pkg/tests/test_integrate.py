import math

import numpy as np
import pytest

from fowlerlab.fowler import Nonlinearity, PiecewiseSystem, Side
from fowlerlab.integrate import (
    EventSpec,
    backend_name,
    compiled_available,
    integrate,
    tolerances,
    trajectory_csv,
)
from fowlerlab.manifolds import equilibria
from fowlerlab.params import derive_exponent_set

BACKENDS = ["python"] + (["compiled"] if compiled_available() else [])


def ham_side():
    return Side.power(derive_exponent_set(5, 0.0, 10 / 3, 0.0), 1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_linear_growth_along_unstable_eigenvector(backend):
    e = derive_exponent_set(5, 1.0, 4.0, 0.0)
    side = Side(e, 0.0, Nonlinearity.power(4.0))
    tr = integrate(side, (1e-3, -1e-3 * e.kappa, 0.0), 1, 10.0, EventSpec(axes=False), backend=backend)
    ratio = np.hypot(tr.x, tr.y) / np.exp(e.Lam * tr.t)
    assert np.ptp(ratio) / ratio[0] < 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
def test_hamiltonian_orbit_conserves_energy(backend):
    side = ham_side()
    P = [q for q in equilibria(side) if q.kind == "P+"][0]
    start = (1.3 * P.x, P.y)
    tr = integrate(side, (*start, 0.0), 1, 30.0, EventSpec(axes=False, lines=((0.0, 1.0, P.y),)), backend=backend)
    E = tr.energy()
    assert E[0] < 0  # inside the homoclinic loop
    assert np.max(np.abs(E - E[0])) < 1e-8


@pytest.mark.parametrize("backend", BACKENDS)
def test_negative_K_blows_up_both_ways(backend):
    side = Side.power(derive_exponent_set(5, 0.0, 4.0, 0.0), -1.0)
    for d in (1, -1):
        tr = integrate(side, (0.5, 0.3, 0.0), d, 100.0, backend=backend)
        assert tr.termination == "blow-up"
        assert abs(tr.t_end) < 10
        assert np.hypot(tr.x[-1], tr.y[-1]) > 1e8


def test_energy_law_pointwise():
    for q in (3.0, 4.0, 6.0):
        side = Side.power(derive_exponent_set(5, 0.5, q, 0.0), 1.0)
        tr = integrate(side, (0.8, -0.1, 0.0), 1, 8.0, EventSpec(axes=False))
        a, g = side.alpha, side.gamma
        h = 1e-3

        def E(tq):
            x, y, _ = tr.at(tq)
            return side.energy(x, y)

        for t in np.linspace(0.5, 7.5, 15):
            dE = (-E(t + 2 * h) + 8 * E(t + h) - 8 * E(t - h) + E(t - 2 * h)) / (12 * h)
            x, y, _ = tr.at(t)
            law = (a + g) * (a * x + y) ** 2
            if abs(law) > 1e-5:  # away from the machine-zero band of the difference quotient
                assert abs(dE - law) <= 1e-5 * abs(law)


def test_time_reversal():
    side = Side.power(derive_exponent_set(5, 0.3, 4.5, 0.5), 1.0)
    fw = integrate(side, (0.9, 0.2, 0.0), 1, 6.0, EventSpec(axes=False))
    x, y, _ = fw.at(fw.t_end)
    bw = integrate(side, (x, y, fw.t_end), -1, 6.0, EventSpec(axes=False))
    assert np.hypot(bw.x[-1] - 0.9, bw.y[-1] - 0.2) < 1e-8 * 0.93


def test_events_ordered_with_sign_changes():
    side = Side.power(derive_exponent_set(5, 0.0, 3.0, 0.0), 1.0)  # spiralling
    tr = integrate(side, (0.01, 0.0, 0.0), 1, 40.0)
    ts = [e.t for e in tr.events]
    assert ts == sorted(ts)
    crossings = tr.events_of("y-axis")
    assert len(crossings) >= 2
    for e in crossings:
        # located to 1e-10 in time
        assert abs(e.x) <= 2e-10 * max(1.0, abs(e.y))
        xl = tr.at(e.t - 1e-6)[0]
        xr = tr.at(e.t + 1e-6)[0]
        assert xl * xr < 0


def test_switch_is_hit_exactly(cor1):
    sys_ = PiecewiseSystem.from_config(cor1)
    tr = integrate(sys_, (0.3, 0.0, -2.0), 1, 4.0, EventSpec(axes=False))
    sw = tr.events_of("switch")
    assert len(sw) == 1 and sw[0].t == 0.0
    seg1, seg2 = tr.segments
    assert seg1.t[-1] == 0.0 and seg2.t[0] == 0.0
    assert tuple(seg1.y[-1]) == tuple(seg2.y[0])
    assert np.all(np.diff(tr.t) >= 0)


def test_backward_piecewise_visits_side1_last(cor1):
    sys_ = PiecewiseSystem.from_config(cor1)
    tr = integrate(sys_, (0.3, -0.6, 2.0), -1, 4.0, EventSpec(axes=False))
    assert tr.side[0] == 2 and tr.side[-1] == 1
    assert np.all(np.diff(tr.t) <= 0)


def test_convergence_target():
    side = Side.power(derive_exponent_set(5, 0.0, 4.0, 0.0), 1.0)
    P = [q for q in equilibria(side) if q.kind == "P+"][0]
    tr = integrate(side, (P.x + 0.1, P.y, 0.0), 1, 500.0, EventSpec(targets=(("P+", (P.x, P.y)),)))
    assert tr.termination == "converged" and tr.target == "P+"


def test_arclength_budget():
    side = Side.power(derive_exponent_set(5, 0.0, 4.0, 0.0), -1.0)
    tr = integrate(side, (1e-3, 0.0, 0.0), 1, 100.0, EventSpec(max_arclength=5.0))
    assert tr.termination == "arclength"
    assert tr.s[-1] == pytest.approx(5.0, abs=1e-9)


@pytest.mark.skipif(not compiled_available(), reason="compiled kernel not built")
def test_backend_parity(cor1):
    sys_ = PiecewiseSystem.from_config(cor1)
    spec = EventSpec(targets=(("P+", (math.sqrt(2), -math.sqrt(2))),), target_side=2)
    a = integrate(sys_, (1e-7, 0.0, -16.0), 1, 100.0, spec, backend="compiled")
    b = integrate(sys_, (1e-7, 0.0, -16.0), 1, 100.0, spec, backend="python")
    assert len(a.t) == len(b.t)
    np.testing.assert_allclose(a.x, b.x, rtol=0, atol=1e-13)
    np.testing.assert_allclose(a.y, b.y, rtol=0, atol=1e-13)
    assert [(e.kind, round(e.t, 9)) for e in a.events] == [(e.kind, round(e.t, 9)) for e in b.events]
    assert a.termination == b.termination


def test_backend_name_respects_env(monkeypatch):
    monkeypatch.setenv("FOWLERLAB_PURE", "1")
    assert backend_name() == "python"


def test_tolerance_override():
    side = ham_side()
    with tolerances(rtol=1e-6):
        coarse = integrate(side, (1.0, -1.0, 0.0), 1, 10.0, EventSpec(axes=False))
    fine = integrate(side, (1.0, -1.0, 0.0), 1, 10.0, EventSpec(axes=False))
    assert len(coarse.t) < len(fine.t)


def test_bad_horizon():
    with pytest.raises(ValueError):
        integrate(ham_side(), (1.0, 0.0), 1, 0.0)


def test_trajectory_csv(cor1):
    sys_ = PiecewiseSystem.from_config(cor1)
    tr = integrate(sys_, (0.3, 0.0, -1.0), 1, 2.0)
    text = trajectory_csv(tr)
    lines = text.splitlines()
    assert lines[0] == "t,r,x,y,u,du,E,side,event"
    assert any(line.endswith(",switch") for line in lines)
