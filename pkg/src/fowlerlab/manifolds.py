"""Equilibria, energy, invariant manifolds of the origin and the ray-flow test.

Manifolds are traced from a short seed along the relevant eigenvector of the
origin: forward in t for the unstable branches, backward for the stable ones.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, RegimeError
from .fowler import PhasePoint, Side
from .integrate import EventSpec, Trajectory, integrate
from .params import Regime

SEED_SCALE = 1e-7
#: center directions escape only polynomially, so a 1e-9 seed never leaves
CENTER_SEED = 1e-2
ARCLENGTH_BUDGET = 1e3
MAX_POINTS = 100_000
TRACE_HORIZON = 1e4

BRANCH_TAGS = ("u+", "u-", "s+", "s-")


@dataclass(frozen=True)
class Equilibrium:
    x: float
    y: float
    kind: str  # "origin", "P+", "P-"
    stability: str
    eigenvalues: tuple[complex, complex]
    energy: float

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


def energy(q, side: Side) -> float:
    """E = (alpha x + y)^2/2 + (alpha gamma + eta) x^2/2 + K G(x)."""
    return side.energy(q[0], q[1])


def energy_array(side: Side, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = side.alpha
    if side.g.q is not None:
        q = side.g.q
        return 0.5 * (a * x + y) ** 2 + 0.5 * side.exps.det * x * x + side.K * np.abs(x) ** q / q
    return np.array([side.energy(float(u), float(v)) for u, v in zip(x, y)])


def _gprime(side: Side, x: float) -> float:
    if side.g.q is not None:
        return (side.g.q - 1) * abs(x) ** (side.g.q - 2)
    h = 1e-6 * max(1.0, abs(x))
    return (side.g(x + h) - side.g(x - h)) / (2 * h)


def _jacobian(side: Side, x: float) -> np.ndarray:
    return np.array([[side.alpha, 1.0], [-side.eta - side.K * _gprime(side, x), side.gamma]])


def _describe(eigs: np.ndarray, side: Side, origin: bool) -> str:
    if origin:
        reg = side.exps.regime
        if reg is Regime.CENTER_UNSTABLE:
            return "center-manifold (unstable node-type)"
        if reg is Regime.CENTER_STABLE:
            return "center-manifold (stable node-type)"
    if not origin and side.exps.hamiltonian:
        return "center"
    re = eigs.real
    if re[0] * re[1] < 0 and abs(eigs[0].imag) == 0:
        return "saddle"
    kind = "focus" if abs(eigs[0].imag) > 0 else "node"
    return ("unstable " if re.sum() > 0 else "stable ") + kind


def _p_amplitude(side: Side) -> float:
    target = -side.exps.det / side.K
    if side.g.q is not None:
        return target ** (1.0 / (side.g.q - 2))

    def f(lx):
        x = math.exp(lx)
        return side.g(x) / x - target

    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2
    while f(hi) < 0:
        hi *= 2
    return math.exp(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def p_exists(side: Side) -> bool:
    reg = side.exps.regime
    if side.K > 0:
        return reg is Regime.SADDLE
    return reg in (Regime.NODE_UNSTABLE, Regime.NODE_STABLE)


def equilibria(side: Side) -> list[Equilibrium]:
    """Origin plus P+ and P- when the regime admits them."""
    eig0 = np.linalg.eigvals(_jacobian(side, 0.0))
    out = [Equilibrium(0.0, 0.0, "origin", _describe(eig0, side, True), tuple(complex(v) for v in eig0), 0.0)]
    if p_exists(side):
        px = _p_amplitude(side)
        eig = np.linalg.eigvals(_jacobian(side, px))
        desc = _describe(eig, side, False)
        for sgn, name in ((1.0, "P+"), (-1.0, "P-")):
            x, y = sgn * px, -sgn * side.alpha * px
            out.append(Equilibrium(x, y, name, desc, tuple(complex(v) for v in eig), side.energy(x, y)))
    return out


def equilibrium_targets(side: Side) -> tuple[tuple[str, tuple[float, float]], ...]:
    return tuple((e.kind, (e.x, e.y)) for e in equilibria(side))


@dataclass(frozen=True)
class AxisCrossing:
    index: int
    arclength: float
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class ManifoldBranch:
    """Arc-length parametrized polyline of one branch of M^u or M^s.

    ``arclength`` is measured from the origin (the straight seed segment is
    included).  ``theta`` is the unwrapped polar angle in tracing order.
    ``crossings`` are the passages through the positive y semi-axis.
    """

    tag: str
    side: Side = field(repr=False)
    t: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    arclength: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    seed_offset: float
    seed: tuple[float, float]
    center: bool
    crossings: tuple[AxisCrossing, ...]
    axis_events: tuple = field(repr=False)
    termination: str
    target: str
    seed_error: float | None
    trajectory: Trajectory = field(repr=False, compare=False)

    @property
    def unstable(self) -> bool:
        return self.tag[0] == "u"

    @property
    def sign(self) -> int:
        return 1 if self.tag[1] == "+" else -1

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    @property
    def seed_arclength(self) -> float:
        return float(self.arclength[0])

    def time_at_arclength(self, v: float) -> float:
        """Integration time at which the branch has arc length ``v``."""
        s_target = v - self.seed_arclength
        if not 0.0 <= s_target <= self.length - self.seed_arclength:
            raise ValueError(f"arclength {v!r} outside [{self.seed_arclength}, {self.length}]")
        tr = self.trajectory
        for seg in tr.segments:
            s = seg.y[:, 2]
            if not s[0] <= s_target <= s[-1]:
                continue
            i = int(np.searchsorted(s, s_target, side="right")) - 1
            i = min(max(i, 0), len(seg.h) - 1)
            if len(seg.h) == 0:
                return float(seg.t[0])
            ta, tb = seg.t[i], seg.t[i + 1]
            if s[i] == s_target:
                return float(ta)
            return float(brentq(lambda tq: seg.at(tq)[2] - s_target, ta, tb, xtol=1e-15, rtol=1e-15))
        return float(tr.t_end)

    def at_arclength(self, v: float) -> PhasePoint:
        tq = self.time_at_arclength(v)
        st = self.trajectory.at(tq)
        return PhasePoint(float(st[0]), float(st[1]), tq)

    def to_csv(self, fh=None) -> str:
        return branch_csv(self, fh)


def _lin_norm(side: Side) -> float:
    return float(np.linalg.norm(np.array([[side.alpha, 1.0], [-side.eta, side.gamma]]), 2))


def branch_exists(side: Side, tag: str) -> tuple[bool, bool]:
    """(exists, is center manifold) for branch family ``tag[0]``."""
    reg = side.exps.regime
    if tag[0] == "u":
        if reg in (Regime.NODE_UNSTABLE, Regime.CENTER_UNSTABLE, Regime.SADDLE):
            return True, False
        if reg is Regime.CENTER_STABLE and side.K < 0:
            return True, True
        return False, False
    if reg in (Regime.SADDLE, Regime.CENTER_STABLE, Regime.NODE_STABLE):
        return True, False
    if reg is Regime.CENTER_UNSTABLE and side.K < 0:
        return True, True
    return False, False


def eigvector(side: Side, tag: str) -> np.ndarray:
    kappa = side.exps.kappa
    if tag[0] == "u":
        return np.array([1.0, -kappa])
    return np.array([1.0, -(side.exps.n - 2 - kappa)])


def _power_terms(g) -> list[tuple[float, float]]:
    """(coefficient, q) of the homogeneous terms of g; log terms are ignored."""
    if g.q is not None:
        return [(1.0, g.q)]
    return [(c, q) for kind, c, q in g.terms if kind == "power"]


def manifold_seed(side: Side, tag: str, eps: float) -> np.ndarray:
    """Point at parameter ``eps`` on branch ``tag``, corrected to second order.

    Writing the branch as z = eps v + eps^(q-1) c + ..., the leading
    nonlinear coefficient solves ((q-1) mu - A) c = (0, -K g(1)) with mu the
    branch eigenvalue; (q-1) mu is never an eigenvalue, since q > 2.  The
    seed then matches the parametrization a e^(mu t) to relative order
    eps^(2(q-2)) instead of eps^(q-2).
    """
    v = eigvector(side, tag)
    mu = side.exps.Lam if tag[0] == "u" else side.exps.lam
    A = np.array([[side.alpha, 1.0], [-side.eta, side.gamma]])
    z = eps * v
    for coef, q in _power_terms(side.g):
        c = np.linalg.solve((q - 1) * mu * np.eye(2) - A, np.array([0.0, -side.K * coef]))
        z = z + eps ** (q - 1) * c
    return z if tag[1] == "+" else -z


def _decimate(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, cap)).astype(int))


def _densify(tr: Trajectory, per_step: int) -> tuple[np.ndarray, np.ndarray]:
    """Times and states with ``per_step`` dense samples inside every step."""
    ts, ys = [], []
    for k, seg in enumerate(tr.segments):
        n = len(seg.h)
        if n == 0:
            if k == 0:
                ts.append(seg.t[:1])
                ys.append(seg.y[:1])
            continue
        th = np.arange(per_step) / per_step
        basis = np.stack([th, th**2, th**3, th**4])  # (4, m)
        inner = seg.y[:-1, None, :] + seg.h[:, None, None] * np.einsum("ick,km->imc", seg.Q, basis)
        tin = seg.t[:-1, None] + seg.h[:, None] * th[None, :]
        start = 0 if k == 0 else 1
        ts.append(tin.reshape(-1)[start:])
        ys.append(inner.reshape(-1, 3)[start:])
        ts.append(seg.t[-1:])
        ys.append(seg.y[-1:])
    return np.concatenate(ts), np.concatenate(ys)


def _seed_point(side, tag, eps, v, center):
    # center manifolds have no exponential parametrization to correct
    sgn = 1.0 if tag[1] == "+" else -1.0
    return sgn * eps * v if center else manifold_seed(side, tag, eps)


def _trace_raw(side, tag, eps, v, direction, horizon, events, center=False):
    seed = _seed_point(side, tag, eps, v, center)
    tr = integrate(side, (seed[0], seed[1], 0.0), direction, horizon, events)
    return seed, tr


def _tube_distance(points: np.ndarray, tr: Trajectory) -> float:
    """Largest distance from ``points`` to the dense curve of ``tr``, relative to max(1, |p|)."""
    tt, st = _densify(tr, 8)
    worst = 0.0
    for p in points:
        d2 = (st[:, 0] - p[0]) ** 2 + (st[:, 1] - p[1]) ** 2
        i = int(np.argmin(d2))
        lo, hi = sorted((tt[max(i - 1, 0)], tt[min(i + 1, len(tt) - 1)]))
        if hi > lo:
            res = minimize_scalar(
                lambda tq: float(np.sum((tr.at(tq)[:2] - p) ** 2)),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * max(1.0, abs(hi))},
            )
            d2min = min(res.fun, d2[i])
        else:
            d2min = d2[i]
        worst = max(worst, math.sqrt(d2min) / max(1.0, math.hypot(p[0], p[1])))
    return worst


def trace_manifold(
    side: Side,
    tag: str,
    max_arclength: float = ARCLENGTH_BUDGET,
    *,
    horizon: float = TRACE_HORIZON,
    eps: float | None = None,
    richardson: bool = True,
    max_points: int = MAX_POINTS,
    per_step: int = 4,
) -> ManifoldBranch:
    """Trace branch ``tag`` ('u+', 'u-', 's+', 's-') of the origin of ``side``.

    Stops at blow-up, at the arc-length budget, at convergence to an
    equilibrium, or at the time horizon.
    """
    if tag not in BRANCH_TAGS:
        raise ValueError(f"branch tag must be one of {BRANCH_TAGS}, got {tag!r}")
    exists, center = branch_exists(side, tag)
    if not exists:
        kind = "unstable" if tag[0] == "u" else "stable"
        raise RegimeError(
            f"no {kind} manifold of the origin for l = {side.exps.l!r}, K = {side.K!r} "
            f"(regime {side.exps.regime})"
        )
    if eps is None:
        eps = CENTER_SEED if center else SEED_SCALE * max(1.0, _lin_norm(side))
    v = eigvector(side, tag)
    direction = 1 if tag[0] == "u" else -1
    seed_len = float(np.hypot(*_seed_point(side, tag, eps, v, center)))
    spec = EventSpec(
        axes=True,
        targets=equilibrium_targets(side),
        max_arclength=max_arclength - seed_len,
    )
    seed, tr = _trace_raw(side, tag, eps, v, direction, horizon, spec, center)

    seed_error = None
    if richardson and not center:
        _, tr2 = _trace_raw(side, tag, eps / 2, v, direction, horizon, spec)
        ref = np.column_stack([tr.x, tr.y])
        pick = _decimate(len(ref), 12)[1:]
        # compare only where both traces have been
        probe = ref[pick][tr.s[pick] <= tr2.s[-1]]
        seed_error = _tube_distance(probe, tr2) if len(probe) and len(tr2.t) >= 2 else 0.0

    t, st = _densify(tr, per_step)
    keep = _decimate(len(t), max_points)
    t, st = t[keep], st[keep]
    pts = st[:, :2].copy()
    arc = st[:, 2] + seed_len
    theta = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
    E = energy_array(side, pts[:, 0], pts[:, 1])

    axis = tuple(e for e in tr.events if e.kind == "y-axis")
    crossings = tuple(
        AxisCrossing(j, e.s + seed_len, e.t, e.x, e.y)
        for j, e in enumerate(ev for ev in axis if ev.y > 0)
    )
    for arr in (t, pts, arc, theta, E):
        arr.setflags(write=False)
    return ManifoldBranch(
        tag=tag,
        side=side,
        t=t,
        points=pts,
        arclength=arc,
        theta=theta,
        energy=E,
        seed_offset=eps,
        seed=(float(seed[0]), float(seed[1])),
        center=center,
        crossings=crossings,
        axis_events=axis,
        termination=tr.termination,
        target=tr.target,
        seed_error=seed_error,
        trajectory=tr,
    )


def branch_csv(branch: ManifoldBranch, fh=None) -> str:
    """Columns arclength, x, y, theta, E, crossing (S_j index on crossing rows)."""
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arclength", "x", "y", "theta", "E", "crossing"])
    f = lambda v: format(float(v), ".17g")
    rows = [(a, x, y, th, e, "") for a, (x, y), th, e in zip(branch.arclength, branch.points, branch.theta, branch.energy)]
    for c in branch.crossings:
        th = float(np.interp(c.arclength, branch.arclength, branch.theta))
        rows.append((c.arclength, c.x, c.y, th, branch.side.energy(c.x, c.y), f"S{c.index}"))
    rows.sort(key=lambda r: (r[0], r[5] != ""))
    for a, x, y, th, e, mark in rows:
        w.writerow([f(a), f(x), f(y), f(th), f(e), mark])
    return buf.getvalue() if fh is None else ""


@dataclass(frozen=True)
class RayFlow:
    """Direction of the flow across T(m) = {y = -m x, x > 0}.

    ``outward`` means toward T+(m) = {m x + y > 0}.  When ``threshold`` is
    set the flow is tangent at x = threshold and switches side there.
    """

    m: float
    quadratic: float
    below: str
    above: str
    threshold: float | None

    def at(self, x: float) -> str:
        if self.threshold is None:
            return self.below
        if math.isclose(x, self.threshold, rel_tol=1e-12):
            return "tangent"
        return self.below if x < self.threshold else self.above


def ray_quadratic(m: float, side: Side) -> float:
    n = side.exps.n
    return m * m - (n - 2) * m + side.eta


def ray_derivative(m: float, x: float, side: Side) -> float:
    """d/dt (m x + y) on T(m) at abscissa ``x``."""
    return -x * ray_quadratic(m, side) - side.K * side.g(x)


def _dir(sign: float) -> str:
    return "outward" if sign > 0 else "inward"


def ray_flow(m: float, side: Side) -> RayFlow:
    """Flow direction across T(m); the tangency threshold is defined for K < 0.

    Raises DomainError for K > 0 when the quadratic m^2-(n-2)m+eta is
    negative, where a threshold would be required.
    """
    Q = ray_quadratic(m, side)
    K = side.K
    if K < 0:
        if Q <= 0:
            return RayFlow(m, Q, "outward", "outward", None)
        return RayFlow(m, Q, "inward", "outward", ray_threshold(m, side))
    if Q < 0:
        raise DomainError(
            f"K = {K!r} > 0 and m^2-(n-2)m+eta = {Q!r} < 0: the threshold S(m) is defined only for K < 0"
        )
    return RayFlow(m, Q, "inward", "inward", None)


def ray_threshold(m: float, side: Side) -> float:
    """Tangency abscissa S(m) on T(m)."""
    Q = ray_quadratic(m, side)
    if not side.K < 0:
        raise DomainError(f"threshold S(m) requires K < 0, got K = {side.K!r}")
    if not Q > 0:
        raise DomainError(f"no tangency on T(m) for m = {m!r}: m^2-(n-2)m+eta = {Q!r} <= 0")
    c = Q / (-side.K)
    if side.g.q is not None:
        return c ** (1.0 / (side.g.q - 2))
    return brentq(lambda lx: side.g(math.exp(lx)) / math.exp(lx) - c, -50.0, 50.0, xtol=1e-15)


def flow_across_ray(m: float, x: float, side: Side, rtol: float = 1e-12) -> str:
    """Sign report at one point of T(m), for any K."""
    val = ray_derivative(m, x, side)
    scale = abs(x * ray_quadratic(m, side)) + abs(side.K * side.g(x))
    if abs(val) <= rtol * scale:
        return "tangent"
    return _dir(val)
