"""Fowler change of variables and the planar vector fields it produces.

With ``r = e^t`` the radial equation

    u'' + (n-1)/r u' + eta/r^2 u + K r^delta u|u|^(q-2) = 0

becomes the autonomous system

    x' = alpha x + y
    y' = -eta x + gamma y - K g(x)

for ``x = u r^alpha``, ``y = u' r^(alpha+1)``.  The two-sided problem glues
two such systems at ``t = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .params import ExponentSet, ProblemConfig


class PhasePoint(NamedTuple):
    x: float
    y: float
    t: float = 0.0


class RadialPoint(NamedTuple):
    u: float
    du: float
    r: float


def to_fowler(p: RadialPoint, alpha: float) -> PhasePoint:
    u, du, r = p
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r!r}")
    return PhasePoint(u * r**alpha, du * r ** (alpha + 1), math.log(r))


def from_fowler(q: PhasePoint, alpha: float) -> RadialPoint:
    x, y, t = q
    r = math.exp(t)
    return RadialPoint(x * math.exp(-alpha * t), y * math.exp(-(alpha + 1) * t), r)


@dataclass(frozen=True)
class Nonlinearity:
    """Reduced reaction ``g_l`` in Fowler variables.

    ``q`` is set only for the pure power law ``x|x|^(q-2)``; the compiled
    integration kernel is used exactly when it is set.
    """

    g: Callable[[float], float]
    primitive: Callable[[float], float] | None = None
    q: float | None = None
    label: str = "custom"
    odd: bool = True
    terms: tuple = field(default=(), compare=False)

    def __call__(self, x: float) -> float:
        return self.g(x)

    @classmethod
    def power(cls, q: float) -> Nonlinearity:
        if not q > 2:
            raise DomainError(f"power-law exponent q = {q!r} must exceed 2")
        qm2 = q - 2

        def g(x: float) -> float:
            return x * abs(x) ** qm2

        def G(x: float) -> float:
            return abs(x) ** q / q

        return cls(g=g, primitive=G, q=q, label=f"power(q={q!r})", terms=(("power", 1.0, q),))

    @classmethod
    def mixed(
        cls,
        powers: Sequence[tuple[float, float]] = (),
        log_terms: Sequence[tuple[float, float]] = (),
    ) -> Nonlinearity:
        """Sum of ``c x|x|^(q-2)`` and ``c x|x|^(q-2) ln(1+|x|)`` terms.

        This is the reduced form of a reaction whose terms all share the same
        ``l``, with the logarithm weighted by ``r^alpha_l``.
        """
        powers = tuple((float(c), float(q)) for c, q in powers)
        log_terms = tuple((float(c), float(q)) for c, q in log_terms)

        def g(x: float) -> float:
            ax = abs(x)
            total = 0.0
            for c, q in powers:
                total += c * x * ax ** (q - 2)
            for c, q in log_terms:
                total += c * x * ax ** (q - 2) * math.log1p(ax)
            return total

        def G(x: float) -> float:
            ax = abs(x)
            total = sum(c * ax**q / q for c, q in powers)
            for c, q in log_terms:
                total += c * quad(lambda s: s ** (q - 1) * math.log1p(s), 0.0, ax, epsabs=0, epsrel=1e-13)[0]
            return total

        terms = tuple(("power", c, q) for c, q in powers) + tuple(("log", c, q) for c, q in log_terms)
        return cls(g=g, primitive=G, label="mixed", terms=terms)

    def G(self, x: float) -> float:
        """Primitive of g vanishing at 0."""
        if self.primitive is not None:
            return self.primitive(x)
        return quad(self.g, 0.0, x, epsabs=0, epsrel=1e-12)[0]


@dataclass(frozen=True)
class Side:
    """One autonomous system: exponents, amplitude and reduced reaction."""

    exps: ExponentSet
    K: float
    g: Nonlinearity

    @classmethod
    def power(cls, exps: ExponentSet, K: float) -> Side:
        return cls(exps, K, Nonlinearity.power(exps.q))

    @property
    def alpha(self) -> float:
        return self.exps.alpha

    @property
    def gamma(self) -> float:
        return self.exps.gamma

    @property
    def eta(self) -> float:
        return self.exps.eta

    def field(self, x: float, y: float) -> tuple[float, float]:
        a = self.exps.alpha
        return a * x + y, -self.exps.eta * x + self.exps.gamma * y - self.K * self.g(x)

    def energy(self, x: float, y: float) -> float:
        a = self.exps.alpha
        return 0.5 * (a * x + y) ** 2 + 0.5 * self.exps.det * x * x + self.K * self.g.G(x)


def vector_field(q, side: Side) -> tuple[float, float]:
    """(dx/dt, dy/dt) of the autonomous system at ``q = (x, y[, t])``."""
    return side.field(q[0], q[1])


@dataclass(frozen=True)
class PiecewiseSystem:
    """Two autonomous sides glued at t = 0 (the switch radius, normalized to 1).

    ``rho`` is the physical switch radius; amplitudes in ``side1``/``side2`` are
    already rescaled by ``rho^(2+delta_i)``.
    """

    side1: Side
    side2: Side
    rho: float = 1.0
    config: ProblemConfig | None = None

    def __post_init__(self):
        e1, e2 = self.side1.exps, self.side2.exps
        if e1.n != e2.n or e1.eta != e2.eta:
            raise DomainError("both sides must share (n, eta)")

    @classmethod
    def from_config(
        cls,
        cfg: ProblemConfig,
        g1: Nonlinearity | None = None,
        g2: Nonlinearity | None = None,
    ) -> PiecewiseSystem:
        e1, e2 = cfg.side(1), cfg.side(2)
        K1 = cfg.rho ** (2 + cfg.delta1) * cfg.K1
        K2 = cfg.rho ** (2 + cfg.delta2) * cfg.K2
        return cls(
            Side(e1, K1, g1 if g1 is not None else Nonlinearity.power(cfg.q1)),
            Side(e2, K2, g2 if g2 is not None else Nonlinearity.power(cfg.q2)),
            rho=cfg.rho,
            config=cfg,
        )

    @property
    def n(self) -> int:
        return self.side1.exps.n

    @property
    def eta(self) -> float:
        return self.side1.exps.eta

    @property
    def kappa(self) -> float:
        return self.side1.exps.kappa

    def side_at(self, t: float, approach: str = "left") -> Side:
        if t < 0:
            return self.side1
        if t > 0:
            return self.side2
        return self.side1 if approach == "left" else self.side2

    def to_radial(self, x: float, y: float, t: float, approach: str = "left") -> RadialPoint:
        """Physical (u, u', r), undoing both the Fowler map and the rho normalization."""
        a = self.side_at(t, approach).alpha
        u, du, r = from_fowler(PhasePoint(x, y, t), a)
        return RadialPoint(u, du / self.rho, r * self.rho)

    def to_phase(self, p: RadialPoint, approach: str = "left") -> PhasePoint:
        u, du, r = p
        if not r > 0:
            raise DomainError(f"radius must be positive, got {r!r}")
        rt = r / self.rho
        side = self.side_at(math.log(rt), approach)
        return to_fowler(RadialPoint(u, du * self.rho, rt), side.alpha)


def piecewise_field(q, sys: PiecewiseSystem, approach: str = "left") -> tuple[float, float]:
    """Field of the glued system; at t == 0 the side comes from ``approach``."""
    x, y, t = q
    return sys.side_at(t, approach).field(x, y)


@dataclass
class ValidationReport:
    clauses: dict[str, bool]
    first_violation: dict[str, float | None]

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def __bool__(self) -> bool:
        return self.passed


def default_g0_grid(points_per_sign: int = 512, lo: float = 1e-6, hi: float = 1e6) -> np.ndarray:
    pos = np.logspace(math.log10(lo), math.log10(hi), points_per_sign)
    return np.concatenate([-pos[::-1], pos])


def _decade_slope(xs: np.ndarray, ratios: np.ndarray) -> float:
    return float(np.polyfit(np.log(xs), np.log(ratios), 1)[0])


def validate_G0(g: Nonlinearity | Callable[[float], float], grid: np.ndarray | None = None,
                slope_floor: float = 0.01) -> ValidationReport:
    """Grid surrogate for the G0 assumption on ``g``.

    Limits are judged by the log-log slope of ``g(x)/x`` over the outermost
    decade of the grid at each end: at least ``slope_floor`` near 0 (so
    ``g'(0) = 0``) and near infinity (so the ratio diverges).
    """
    if grid is None:
        grid = default_g0_grid()
    grid = np.asarray(grid, dtype=float)
    if np.any(grid == 0) or not np.allclose(np.sort(grid), np.sort(-grid)):
        raise ValueError("grid must be symmetric and exclude 0")
    ev = g.g if isinstance(g, Nonlinearity) else g

    clauses: dict[str, bool] = {}
    first: dict[str, float | None] = {}

    def record(name: str, bad: np.ndarray, xs: np.ndarray):
        idx = np.flatnonzero(bad)
        clauses[name] = idx.size == 0
        first[name] = float(xs[idx[0]]) if idx.size else None

    g0 = ev(0.0)
    clauses["g(0)=0"] = abs(g0) <= 1e-300
    first["g(0)=0"] = None if clauses["g(0)=0"] else 0.0

    pos = np.sort(grid[grid > 0])
    neg = np.sort(grid[grid < 0])[::-1]  # ordered by increasing |x|
    rp = np.array([ev(float(v)) / v for v in pos])
    rn = np.array([ev(float(v)) / v for v in neg])

    record("g(x)/x>0", np.concatenate([rn <= 0, rp <= 0]), np.concatenate([neg, pos]))
    # decreasing for x<0 means increasing in |x|; both sides strictly monotone in |x|
    record("monotone x<0", np.concatenate([[False], np.diff(rn) <= 0]), neg)
    record("monotone x>0", np.concatenate([[False], np.diff(rp) <= 0]), pos)

    ok0 = True
    viol0 = None
    okinf = True
    violinf = None
    for xs, rs in ((pos, rp), (neg, rn)):
        ax = np.abs(xs)
        if np.any(rs <= 0):
            ok0 = okinf = False
            viol0 = viol0 if viol0 is not None else float(xs[0])
            violinf = violinf if violinf is not None else float(xs[-1])
            continue
        low = ax <= ax[0] * 10
        high = ax >= ax[-1] / 10
        if low.sum() >= 2 and _decade_slope(ax[low], rs[low]) < slope_floor:
            ok0 = False
            viol0 = viol0 if viol0 is not None else float(xs[0])
        if high.sum() >= 2 and _decade_slope(ax[high], rs[high]) < slope_floor:
            okinf = False
            violinf = violinf if violinf is not None else float(xs[-1])
    clauses["g'(0)=0"] = ok0
    first["g'(0)=0"] = viol0
    clauses["g(x)/x->inf"] = okinf
    first["g(x)/x->inf"] = violinf
    return ValidationReport(clauses, first)
