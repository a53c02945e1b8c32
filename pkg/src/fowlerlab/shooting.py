"""Shooting across the switch radius: solution classes, zero counts, the
D_k / L_k structure search, manifold intersections and scaling checks.

Two seed families are supported:

* ``D``: regular at the origin, ``u r^kappa -> d``; the seed lives on the
  unstable manifold of side 1 and the solve runs forward into side 2.
* ``L``: fast decay at infinity, ``u r^(n-2-kappa) -> L``; the seed lives on
  the stable manifold of side 2 and the solve runs backward into side 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BracketNotFound,
    BudgetExhausted,
    DegenerateCrossing,
    DomainError,
    RegimeError,
    SeedOverflow,
    Unresolved,
)
from .fowler import PiecewiseSystem, Side
from .integrate import NONDEGENERACY_FLOOR, EventSpec, Trajectory, integrate
from .manifolds import (
    SEED_SCALE,
    ManifoldBranch,
    _lin_norm,
    _tube_distance,
    branch_exists,
    equilibrium_targets,
    manifold_seed,
    trace_manifold,
)
from .params import ProblemConfig, Regime

FAR_HORIZON = 400.0
SCAN_POINTS = 256
BISECT_RTOL = 1e-10
TUBE_TOL = 1e-6
EXPONENT_TOL = 1e-3
LOG_RATE_TOL = 0.10
NEAR_BUDGET = 1e12
SPIRAL_BUDGET = 1e3
#: far-side points closer than this (relative to the switch state) count as an origin approach
APPROACH_RTOL = 1e-4
MAX_REFINE_DEPTH = 12


# ---------------------------------------------------------------- classes


@dataclass(frozen=True)
class TerminalFit:
    """Asymptotic class of one end of a trajectory.

    ``kind`` is ``fd``/``sd`` on the far end, ``R``/``S`` on the origin end,
    or ``blow-up``.  ``coefficient`` is the fitted limit (L, d, c(Q) or P_x);
    ``exponent`` the fitted power of r in the decay where one applies.
    """

    kind: str
    rate: str
    target: str = ""
    sign: int = 0
    coefficient: float | None = None
    exponent: float | None = None
    radius: float | None = None


@dataclass(frozen=True)
class SolutionClass:
    origin: str  # "R", "S" or "blow-up"
    infinity: str  # "fd", "sd" or "blow-up"
    zeros: int
    d: float | None = None
    L: float | None = None
    origin_rate: str = ""
    infinity_rate: str = ""
    target: str = ""
    blowup_radius: float | None = None

    def __post_init__(self):
        if not (isinstance(self.zeros, int) and self.zeros >= 0):
            raise ValueError(f"zero count must be a nonnegative integer, got {self.zeros!r}")

    @property
    def label(self) -> str:
        return f"({self.origin}, {self.infinity}, {self.zeros})"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "origin": self.origin,
            "origin_rate": self.origin_rate,
            "infinity": self.infinity,
            "infinity_rate": self.infinity_rate,
            "zeros": self.zeros,
            "d": self.d,
            "L": self.L,
            "target": self.target,
            "blowup_radius": self.blowup_radius,
        }


# ---------------------------------------------------------------- families


@dataclass(frozen=True)
class _Family:
    name: str
    near: Side
    far: Side
    near_idx: int
    far_idx: int
    tag: str
    direction: int  # integration direction (seed side -> far side)
    eig: float  # exponential rate of the seeding manifold
    weight: float  # physical seed = rho**weight * normalized seed


def _family(sys: PiecewiseSystem, name: str) -> _Family:
    kappa = sys.kappa
    if name == "D":
        s1 = sys.side1
        return _Family("D", s1, sys.side2, 1, 2, "u+", 1, s1.exps.Lam, kappa)
    if name == "L":
        s2 = sys.side2
        return _Family("L", s2, sys.side1, 2, 1, "s+", -1, s2.exps.lam, sys.n - 2 - kappa)
    raise ValueError(f"family must be 'D' or 'L', got {name!r}")


def _require_seed_manifold(fam: _Family) -> None:
    exists, center = branch_exists(fam.near, fam.tag)
    side = "side 1 unstable" if fam.name == "D" else "side 2 stable"
    if not exists:
        raise RegimeError(f"{fam.name}-family needs the {side} manifold, absent for regime {fam.near.exps.regime}")
    if center:
        raise RegimeError(f"{fam.name}-family seeding on a center manifold (regime {fam.near.exps.regime}) is not supported")


# ---------------------------------------------------------------- zeros and tails


def count_nondegenerate_zeros(
    traj: Trajectory,
    floor: float = NONDEGENERACY_FLOOR,
    *,
    before: float | None = None,
    after: float | None = None,
) -> int:
    """Number of x = 0 crossings of ``traj``, optionally within a time window.

    ``before``/``after`` are in integration order (respecting direction).
    Raises DegenerateCrossing if a crossing in the window has |y| <= floor.
    """
    if traj.termination == "step-failure":
        raise ValueError("trajectory ended in a step failure and is not classified")
    d = traj.direction
    hits = []
    for e in traj.events:
        if e.kind != "y-axis":
            continue
        if before is not None and not d * e.t < d * before:
            continue
        if after is not None and not d * e.t > d * after:
            continue
        hits.append(e)
    bad = [e.t for e in hits if abs(e.y) <= floor]
    if bad:
        raise DegenerateCrossing(f"{len(bad)} crossing(s) with |y| <= {floor:g}", tuple(bad))
    return len(hits)


def _tail(traj: Trajectory, segs=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    seg = traj.segments[-1] if segs is None else segs
    return seg.t, seg.y[:, 0], seg.y[:, 1]


def _fit_slope(t: np.ndarray, v: np.ndarray) -> float:
    return float(np.polyfit(t, v, 1)[0])


def _origin_tail(side: Side, t, x, y, direction: int):
    """Rate and eigen-direction of a convergence to the origin."""
    nrm = np.hypot(x, y)
    ok = (nrm > 0) & (nrm < 1e-3 * max(nrm[0], 1e-300))
    if ok.sum() < 6:
        ok = np.zeros_like(nrm, dtype=bool)
        ok[len(nrm) // 2 :] = True
        ok &= nrm > 0
    rate = _fit_slope(t[ok], np.log(nrm[ok]))
    lam, Lam = side.exps.lam, side.exps.Lam
    along_lam = abs(rate - lam) <= abs(rate - Lam)
    return rate, along_lam


def log_rate_fit(traj: Trajectory, t_min: float = 50.0, t_max: float | None = None) -> float:
    """Exponent -p of a tail ``|x| ~ (t - t1)^(-p)`` over ``[t_min, t_max]`` after the start.

    At a critical exponent the origin is approached along a center direction
    with ``p = 1/(q-2)``.  The offset t1 is unknown, so the fit uses
    ``ln|d ln x / dt| = ln p + (ln|x| - ln A) / p``, whose slope 1/p does not
    depend on t1.
    """
    t0 = traj.t_start
    tt = np.abs(traj.t - t0)
    x = np.abs(traj.x)
    hi = tt[-1] if t_max is None else t_max
    sel = (tt >= t_min) & (tt <= hi) & (x > 0)
    if sel.sum() < 6:
        raise Unresolved(f"too few samples in the fit window [{t_min}, {hi}]")
    lx = np.log(x[sel])
    rate = np.abs(np.gradient(lx, tt[sel]))
    if not np.all(rate > 0):
        raise Unresolved("the tail is not monotone in the fit window")
    slope = _fit_slope(lx, np.log(rate))
    if not slope > 0:
        raise Unresolved(f"no power-law tail in the fit window (slope {slope!r})")
    return -1.0 / slope


def _center_direction(side: Side, direction: int) -> bool:
    reg = side.exps.regime
    return (direction > 0 and reg is Regime.CENTER_STABLE) or (direction < 0 and reg is Regime.CENTER_UNSTABLE)


def classify_terminal(
    traj: Trajectory,
    side: Side,
    direction: int | None = None,
    rho: float = 1.0,
) -> TerminalFit:
    """Asymptotic class at the end of ``traj`` reached on ``side``.

    Forward runs are classified at infinity (fd / sd), backward runs at the
    origin (R / S).  Raises Unresolved when the horizon is hit without any
    dwell criterion being met.
    """
    direction = traj.direction if direction is None else direction
    forward = direction > 0
    term = traj.termination
    kappa = side.exps.kappa
    n = side.exps.n
    fin = traj.final
    sgn = int(np.sign(fin.x)) or int(np.sign(fin.y))

    if term == "blow-up":
        return TerminalFit("blow-up", "finite", sign=sgn, radius=rho * math.exp(fin.t))

    if term == "converged" and traj.target in ("P+", "P-"):
        return TerminalFit("sd" if forward else "S", "power", traj.target, 1 if traj.target == "P+" else -1,
                           coefficient=abs(fin.x), exponent=side.alpha)

    t, x, y = _tail(traj)
    if term == "converged" and traj.target == "origin":
        rate, along_lam = _origin_tail(side, t, x, y, direction)
        a = side.alpha
        if forward:
            if along_lam:
                L = fin.x * math.exp(-side.exps.lam * fin.t) * rho ** (n - 2 - kappa)
                return TerminalFit("fd", "fast", "origin", sgn, coefficient=L, exponent=a - rate)
            c = fin.x * math.exp(-side.exps.Lam * fin.t) * rho**kappa
            return TerminalFit("sd", "linear", "origin", sgn, coefficient=c, exponent=a - rate)
        if not along_lam:
            d = fin.x * math.exp(-side.exps.Lam * fin.t) * rho**kappa
            return TerminalFit("R", "regular", "origin", sgn, coefficient=d, exponent=a - rate)
        c = fin.x * math.exp(-side.exps.lam * fin.t) * rho ** (n - 2 - kappa)
        return TerminalFit("S", "linear", "origin", sgn, coefficient=c, exponent=a - rate)

    if term == "horizon" and _center_direction(side, direction):
        span = abs(traj.t_end - traj.t_start)
        slope = log_rate_fit(traj, t_min=0.1 * span)
        expected = -1.0 / (side.exps.q - 2)
        nrm = np.hypot(x, y)
        if nrm[-1] < nrm[0] and abs(slope - expected) <= LOG_RATE_TOL * abs(expected):
            return TerminalFit("sd" if forward else "S", "log-corrected", "origin", sgn, exponent=slope)

    raise Unresolved(f"no terminal criterion met (termination {term!r} at t = {fin.t!r})")


# ---------------------------------------------------------------- radial solves


def _seed_start(fam: _Family, value: float) -> tuple[float, float, float]:
    a = abs(value)
    if a == 0 or not math.isfinite(a):
        raise DomainError(f"seed must be finite and nonzero, got {value!r}")
    eps = min(SEED_SCALE * max(1.0, _lin_norm(fam.near)), 1e-3 * a)
    t_s = math.log(eps / a) / fam.eig
    # g is odd, so the negative branch is the mirror image of the positive one
    z = math.copysign(1.0, value) * manifold_seed(fam.near, fam.tag, eps)
    return (float(z[0]), float(z[1]), t_s)


def _classify(fam: _Family, traj: Trajectory, seed_phys: float, rho: float) -> SolutionClass:
    zeros = count_nondegenerate_zeros(traj)
    fit = classify_terminal(traj, fam.far, fam.direction, rho)
    if fam.name == "D":
        inf = fit.kind
        return SolutionClass("R", inf, zeros, d=seed_phys,
                             L=fit.coefficient if inf == "fd" else None,
                             origin_rate="regular", infinity_rate=fit.rate, target=fit.target,
                             blowup_radius=fit.radius)
    return SolutionClass(fit.kind, "fd", zeros, d=fit.coefficient if fit.kind == "R" else None, L=seed_phys,
                         origin_rate=fit.rate, infinity_rate="fast", target=fit.target,
                         blowup_radius=fit.radius)


def _solve_trajectory(sys: PiecewiseSystem, seed: float, family: str, horizon: float,
                      backend: str | None = None, require_switch: bool = True) -> tuple[_Family, Trajectory]:
    fam = _family(sys, family)
    _require_seed_manifold(fam)
    value = seed / sys.rho**fam.weight
    start = _seed_start(fam, value)
    spec = EventSpec(targets=equilibrium_targets(fam.far), target_side=fam.far_idx)
    traj = integrate(sys, start, fam.direction, abs(start[2]) + horizon, spec, backend=backend)
    if require_switch and not any(e.kind == "switch" for e in traj.events):
        if traj.termination == "blow-up":
            raise SeedOverflow(
                f"seed {seed!r} blows up before the switch at t = {traj.t_end!r}; "
                f"it exceeds the {fam.name}-family bound"
            )
        raise Unresolved(f"trajectory ended ({traj.termination}) before the switch")
    return fam, traj


def solve_radial(
    sys: PiecewiseSystem,
    seed: float,
    family: str = "D",
    horizon: float = FAR_HORIZON,
    *,
    backend: str | None = None,
) -> tuple[Trajectory, SolutionClass]:
    """Solve from ``u r^kappa -> seed`` (family D) or ``u r^(n-2-kappa) -> seed`` (L).

    ``seed`` is in physical units (the switch radius rho is undone).  The
    trajectory starts on the seeding manifold, crosses the switch and runs
    for ``horizon`` more time units on the far side.
    """
    fam, traj = _solve_trajectory(sys, seed, family, horizon, backend)
    return traj, _classify(fam, traj, seed, sys.rho)


def seed_bound(sys: PiecewiseSystem, family: str = "D") -> float:
    """Empirical D^inf (or L^inf): sup of seeds whose near-side solve survives to the switch."""
    fam = _family(sys, family)
    _require_seed_manifold(fam)
    br = trace_manifold(fam.near, fam.tag, NEAR_BUDGET, richardson=False)
    if br.termination != "blow-up":
        return math.inf
    return br.seed_offset * math.exp(fam.eig * br.trajectory.t_end) * sys.rho**fam.weight


# ---------------------------------------------------------------- transversality


def transversality(Q, sys: PiecewiseSystem) -> float:
    """<f_1(Q), J f_2(Q)> with J the rotation by +pi/2; positive when the
    side-1 flow crosses the side-2 flow from its right to its left."""
    x, y = float(Q[0]), float(Q[1])
    s1, s2 = sys.side1, sys.side2
    a1, a2 = s1.alpha, s2.alpha
    n = sys.n
    return (
        (a1 - a2) * ((n - 2) * x * y + y * y + sys.eta * x * x)
        - (a2 * x + y) * s1.K * s1.g(x)
        + (a1 * x + y) * s2.K * s2.g(x)
    )


# ---------------------------------------------------------------- hypotheses


def structure_theorem(sys: PiecewiseSystem, family: str) -> str:
    """Which structure theorem covers ``sys`` for ``family``; RegimeError if none."""
    e1, e2 = sys.side1.exps, sys.side2.exps
    K1, K2 = sys.side1.K, sys.side2.K
    if family == "D":
        if not (K1 < 0 < K2 and 2 < e1.l < e1.I_eta and e2.l > e2.sobolev):
            raise RegimeError(
                "D-structure needs K1 < 0 < K2, 2 < l1 < I(eta) and l2 > 2^*; "
                f"got K1={K1!r}, K2={K2!r}, l1={e1.l!r}, l2={e2.l!r}, I={e1.I_eta}, 2^*={e2.sobolev!r}"
            )
        return "main1bis" if e1.l <= e2.l <= e2.I_eta else "main1"
    if family == "L":
        if not (K2 < 0 < K1 and 2 < e1.l < e1.sobolev and e2.l > e2.serrin):
            raise RegimeError(
                "L-structure needs K2 < 0 < K1, 2 < l1 < 2^* and l2 > 2_*(eta); "
                f"got K1={K1!r}, K2={K2!r}, l1={e1.l!r}, l2={e2.l!r}, 2^*={e1.sobolev!r}, 2_*={e2.serrin!r}"
            )
        return "main2bis" if e2.l >= e1.l >= e1.serrin else "main2"
    raise ValueError(f"family must be 'D' or 'L', got {family!r}")


# ---------------------------------------------------------------- probes


@dataclass
class _Probe:
    arclength: float
    tau: float
    value: float  # normalized seed coefficient
    Q: tuple[float, float]
    zeros_near: int
    zeros_far: int
    fit: TerminalFit | None
    traj: Trajectory | None = field(default=None, repr=False)

    @property
    def zeros(self) -> int:
        return self.zeros_near + self.zeros_far

    @property
    def key(self) -> tuple:
        if self.fit is None:
            return ("unresolved", self.zeros)
        tgt = self.fit.target if self.fit.target in ("P+", "P-") else f"{self.fit.rate}{self.fit.sign:+d}"
        return (self.zeros, self.fit.kind, tgt)


class _Search:
    def __init__(self, sys: PiecewiseSystem, fam: _Family, branch: ManifoldBranch, horizon: float):
        self.sys = sys
        self.fam = fam
        self.branch = branch
        self.horizon = horizon
        self.eps0 = branch.seed_offset
        self.spec = EventSpec(targets=equilibrium_targets(fam.far))
        self.near_axis = [e for e in branch.axis_events]
        self.warnings: list[str] = []
        self.evaluations = 0

    def seed_of(self, tau: float) -> float:
        return self.eps0 * math.exp(self.fam.eig * tau) * self.sys.rho**self.fam.weight

    def _near_zeros(self, tau: float) -> int:
        d = self.fam.direction
        hits = [e for e in self.near_axis if d * e.t < d * tau]
        if any(abs(e.y) <= NONDEGENERACY_FLOOR for e in hits):
            raise DegenerateCrossing("degenerate crossing on the seeding manifold", tuple(e.t for e in hits))
        return len(hits)

    def run_far(self, Q) -> Trajectory:
        return integrate(self.fam.far, (Q[0], Q[1], 0.0), self.fam.direction, self.horizon, self.spec)

    def probe(self, v: float, keep: bool = False) -> _Probe:
        for attempt in range(3):
            self.evaluations += 1
            tau = self.branch.time_at_arclength(v)
            st = self.branch.trajectory.at(tau)
            try:
                zn = self._near_zeros(tau)
                traj = self.run_far(st)
                zf = count_nondegenerate_zeros(traj)
            except DegenerateCrossing:
                nv = v * (1 + BISECT_RTOL)
                self.warnings.append(f"degenerate crossing at arclength {v!r}; perturbed to {nv!r}")
                v = nv
                continue
            try:
                fit = classify_terminal(traj, self.fam.far, self.fam.direction, self.sys.rho)
            except Unresolved:
                fit = None
            return _Probe(v, tau, self.seed_of(tau), (float(st[0]), float(st[1])), zn, zf, fit,
                          traj if keep else None)
        raise DegenerateCrossing(f"degenerate crossing persists near arclength {v!r}", ())


def _scan(search: _Search, lo: float, hi: float, points: int, zero_cap: int) -> list[_Probe]:
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    out = []
    for v in grid:
        p = search.probe(float(v))
        out.append(p)
        if p.fit is not None and p.zeros > zero_cap:
            break
    return out


def _refine_scan(search: _Search, probes: list[_Probe], depth: int = 0) -> list[_Probe]:
    """Subdivide intervals whose zero count jumps by more than one."""
    if depth >= MAX_REFINE_DEPTH:
        return probes
    out = [probes[0]]
    changed = False
    for a, b in zip(probes, probes[1:]):
        if a.fit is not None and b.fit is not None and abs(b.zeros - a.zeros) > 1:
            inner = np.logspace(math.log10(a.arclength), math.log10(b.arclength), 10)[1:-1]
            out.extend(search.probe(float(v)) for v in inner)
            changed = True
        out.append(b)
    return _refine_scan(search, out, depth + 1) if changed else out


def _closest_approach(traj: Trajectory) -> tuple[float, float]:
    """Time of the closest approach to the origin and its distance relative to the start."""
    nrm = np.hypot(traj.x, traj.y)
    i = int(np.argmin(nrm))
    return float(traj.t[i]), float(nrm[i] / max(nrm[0], 1e-300))


@dataclass
class Flip:
    lo: _Probe
    hi: _Probe
    mid: _Probe
    zeros: int  # zero count of the connecting solution
    approach: float
    exponent: float | None
    tube: float | None = None
    rel_width: float = 0.0

    @property
    def value(self) -> float:
        return self.mid.value

    def bracket(self) -> tuple[float, float]:
        a, b = self.lo.value, self.hi.value
        return (min(a, b), max(a, b))


def _bisect(search: _Search, a: _Probe, b: _Probe, rtol: float) -> Flip:
    ka = a.key
    mid = None
    while (b.arclength - a.arclength) > rtol * b.arclength:
        vm = 0.5 * (a.arclength + b.arclength)
        m = search.probe(vm)
        if m.fit is not None and m.fit.kind == "fd":
            a = b = m
            break
        if m.key == ka:
            a = m
        else:
            b = m
    vm = 0.5 * (a.arclength + b.arclength)
    mid = search.probe(vm, keep=True)
    t_star, approach = _closest_approach(mid.traj)
    exponent = _fd_exponent(mid.traj, search.fam.far, t_star)
    width = abs(b.value - a.value) / abs(mid.value)
    # neighbours of the connecting solution can only gain the crossing made on departure
    zeros = min(a.zeros, b.zeros)
    return Flip(a, b, mid, zeros, approach, exponent, rel_width=width)


def _fd_exponent(traj: Trajectory, side: Side, t_star: float) -> float | None:
    """Decay exponent of u on the approach to the origin, before the departure.

    The log-norm slope is biased by the nonlinearity at large amplitude and
    by the departing mode near the closest approach.  Step-wise slopes are
    averaged over the one-decade window where they vary least.
    """
    t, x, y = traj.t, traj.x, traj.y
    d = traj.direction
    nrm = np.hypot(x, y)
    pre = d * t <= d * t_star
    if pre.sum() < 8:
        return None
    k_peak = int(np.argmax(np.where(pre, nrm, -np.inf)))
    idx = np.flatnonzero(pre & (np.arange(len(t)) >= k_peak))
    if len(idx) < 8:
        return None
    tt, ln = t[idx], np.log(nrm[idx])
    keep = (ln < ln[0] - math.log(10)) & (ln > ln.min() + math.log(10))
    tt, ln = tt[keep], ln[keep]
    if len(tt) < 4:
        return None
    dt = np.diff(tt)
    ok = dt != 0
    sl = np.diff(ln)[ok] / dt[ok]
    mid = 0.5 * (ln[1:] + ln[:-1])[ok]
    best, val = math.inf, None
    half = 0.5 * math.log(10)
    for m in mid:
        w = np.abs(mid - m) <= half
        if w.sum() < 3:
            continue
        spread = float(np.ptp(sl[w]))
        if spread < best:
            best, val = spread, float(np.average(sl[w], weights=np.abs(dt[ok][w])))
    if val is None:
        return None
    return side.alpha - val


# ---------------------------------------------------------------- intersections


@dataclass(frozen=True)
class IntersectionPoint:
    index: int
    x: float
    y: float
    branch: str  # spiral branch tag, e.g. "s+" / "s-"
    theta: float
    theta_window: tuple[float, float]
    arclength: float  # on the graph branch (M^{u,+} for the D family)
    spiral_arclength: float
    t_graph: float
    t_spiral: float
    transversality: float
    seed: float  # d (or L) of the connecting solution
    first: bool = True  # Q_j (True) or a later crossing of the same region

    @property
    def in_window(self) -> bool:
        lo, hi = self.theta_window
        return lo < self.theta < hi

    @property
    def parity_ok(self) -> bool:
        return self.branch[1] == ("+" if self.index % 2 == 0 else "-")


def _segment_crossings(P: np.ndarray, R: np.ndarray, block: int = 256):
    """All proper crossings between polylines P and R.

    Returns a list of (i, a, j, b): segment i of P at fraction a meets
    segment j of R at fraction b.
    """
    out = []
    nP, nR = len(P) - 1, len(R) - 1
    if nP < 1 or nR < 1:
        return out

    def boxes(A, n):
        res = []
        for s in range(0, n, block):
            e = min(s + block, n)
            chunk = A[s : e + 1]
            res.append((s, e, chunk.min(axis=0), chunk.max(axis=0)))
        return res

    bp, br = boxes(P, nP), boxes(R, nR)
    for s1, e1, lo1, hi1 in bp:
        for s2, e2, lo2, hi2 in br:
            if np.any(hi1 < lo2) or np.any(hi2 < lo1):
                continue
            a0 = P[s1:e1][:, None, :]
            a1 = P[s1 + 1 : e1 + 1][:, None, :]
            b0 = R[s2:e2][None, :, :]
            b1 = R[s2 + 1 : e2 + 1][None, :, :]
            da = a1 - a0
            db = b1 - b0
            den = da[..., 0] * db[..., 1] - da[..., 1] * db[..., 0]
            w = b0 - a0
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (w[..., 0] * db[..., 1] - w[..., 1] * db[..., 0]) / den
                tb = (w[..., 0] * da[..., 1] - w[..., 1] * da[..., 0]) / den
            hit = (den != 0) & (ta >= 0) & (ta < 1) & (tb >= 0) & (tb < 1)
            for i, j in zip(*np.nonzero(hit)):
                out.append((s1 + int(i), float(ta[i, j]), s2 + int(j), float(tb[i, j])))
    out.sort()
    return out


def _newton_intersection(g: ManifoldBranch, s: ManifoldBranch, tg: float, ts: float, tol: float = 1e-13):
    """Refine g(tg) = s(ts) with Newton's method on the dense outputs."""
    trg, trs = g.trajectory, s.trajectory
    lo_g, hi_g = sorted((trg.t_start, trg.t_end))
    lo_s, hi_s = sorted((trs.t_start, trs.t_end))
    for _ in range(50):
        pg = trg.at(tg)
        ps = trs.at(ts)
        F = pg[:2] - ps[:2]
        if np.max(np.abs(F)) <= tol * max(1.0, float(np.max(np.abs(pg[:2])))):
            break
        fg = np.array(g.side.field(pg[0], pg[1]))
        fs = np.array(s.side.field(ps[0], ps[1]))
        J = np.column_stack([fg, -fs])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        tg = min(max(tg + step[0], lo_g), hi_g)
        ts = min(max(ts + step[1], lo_s), hi_s)
    pg = trg.at(tg)
    return tg, ts, float(pg[0]), float(pg[1]), float(pg[2])


def _spiral_theta(s: ManifoldBranch, ts: float) -> float:
    """Unwrapped polar angle of the spiral at branch time ``ts``, continued from the seed."""
    tt = s.t
    d = s.trajectory.direction
    k = int(np.searchsorted(d * tt, d * ts, side="right"))
    k = max(1, min(k, len(tt)))
    prev = s.theta[k - 1]
    p = s.trajectory.at(ts)
    raw = math.atan2(p[1], p[0])
    return raw + 2 * math.pi * round((prev - raw) / (2 * math.pi))


def _region_index(s: ManifoldBranch, spiral_arclength: float) -> int:
    m = sum(1 for c in s.crossings if c.arclength < spiral_arclength)
    return 2 * m + (0 if s.sign > 0 else 1)


def intersect_manifolds(
    graph: ManifoldBranch,
    spirals: tuple[ManifoldBranch, ManifoldBranch],
    sys: PiecewiseSystem,
    j_max: int | None = None,
    family: str = "D",
) -> list[IntersectionPoint]:
    """Crossings of the graph branch with both spiral branches, indexed by region.

    For the D family ``graph`` is M^{u,+} of side 1 and ``spirals`` are
    M^{s,+/-} of side 2.  Each region j yields its first crossing Q_j
    (``first=True``) followed by any later crossings.  Raises BudgetExhausted
    (with ``partial``) if regions 0..j_max are not all reached.
    """
    fam = _family(sys, family)
    eps0 = graph.seed_offset
    found: list[IntersectionPoint] = []
    for sp in spirals:
        for i, a, j, b in _segment_crossings(graph.points, sp.points):
            tg0 = graph.t[i] + a * (graph.t[i + 1] - graph.t[i])
            ts0 = sp.t[j] + b * (sp.t[j + 1] - sp.t[j])
            tg, ts, x, y, sg = _newton_intersection(graph, sp, tg0, ts0)
            s_arc = sp.trajectory.at(ts)[2] + sp.seed_arclength
            idx = _region_index(sp, s_arc)
            theta_q = _spiral_theta(sp, ts)
            # angle swept along the spiral from Q back to the origin
            sweep = float(sp.theta[0]) - theta_q
            window = (-(idx + 1) * math.pi, -idx * math.pi) if family == "D" else (idx * math.pi, (idx + 1) * math.pi)
            found.append(
                IntersectionPoint(
                    index=idx, x=x, y=y, branch=sp.tag, theta=sweep, theta_window=window,
                    arclength=sg + graph.seed_arclength, spiral_arclength=float(s_arc),
                    t_graph=tg, t_spiral=ts,
                    transversality=transversality((x, y), sys),
                    seed=eps0 * math.exp(fam.eig * tg) * sys.rho**fam.weight,
                )
            )
    # deduplicate crossings that Newton merged
    found.sort(key=lambda p: p.arclength)
    uniq: list[IntersectionPoint] = []
    for p in found:
        if uniq and abs(p.arclength - uniq[-1].arclength) <= 1e-9 * max(1.0, p.arclength) and p.branch == uniq[-1].branch:
            continue
        uniq.append(p)
    seen: set[int] = set()
    out = []
    for p in uniq:
        out.append(replace(p, first=p.index not in seen))
        seen.add(p.index)
    out.sort(key=lambda p: (p.index, p.arclength))
    if j_max is not None:
        missing = [j for j in range(j_max + 1) if j not in seen]
        if missing:
            raise BudgetExhausted(f"regions {missing} not reached within the arclength budgets", out)
    return out


def _region_polygon(sp: ManifoldBranch, idx: int) -> np.ndarray:
    """Closed boundary of the region bounded by the spiral piece with index idx."""
    m = idx // 2
    arc = sp.arclength
    cr = sp.crossings
    if m >= len(cr):
        raise BudgetExhausted(f"spiral {sp.tag} has only {len(cr)} axis crossings", None)
    hi = cr[m].arclength
    lo = 0.0 if m == 0 else cr[m - 1].arclength
    sel = (arc >= lo) & (arc <= hi)
    pts = [np.array([[0.0, 0.0]])] if m == 0 else [np.array([[cr[m - 1].x, cr[m - 1].y]])]
    pts.append(sp.points[sel])
    pts.append(np.array([[cr[m].x, cr[m].y]]))
    return np.concatenate(pts)


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule; ``poly`` is implicitly closed."""
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    xa, ya = poly[:, 0][None, :], poly[:, 1][None, :]
    xb, yb = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    straddle = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = xa + (y - ya) * (xb - xa) / (yb - ya)
    hits = straddle & (x < xcross)
    return (hits.sum(axis=1) % 2) == 1


def reentry(graph: ManifoldBranch, sp: ManifoldBranch, Q: IntersectionPoint, chunk: int = 2048) -> bool:
    """Whether the graph branch enters the closed region of Q's index again after Q."""
    poly = _region_polygon(sp, Q.index)
    after = graph.arclength > Q.arclength * (1 + 1e-8) + 1e-12
    pts = graph.points[after]
    # points sitting on the boundary are not re-entries
    for s in range(0, len(pts), chunk):
        inside = points_in_polygon(pts[s : s + chunk], poly)
        if inside.any():
            cand = pts[s : s + chunk][inside]
            far = np.hypot(cand[:, 0] - Q.x, cand[:, 1] - Q.y) > 1e-6 * max(1.0, math.hypot(Q.x, Q.y))
            if far.any():
                return True
    return False


# ---------------------------------------------------------------- structure


@dataclass
class StructureReport:
    family: str
    theorem: str
    config: dict
    exponents: dict
    seeds: list[dict]  # D_k or L_k entries
    tilde: list[dict]
    intervals: list[dict]
    intersections: list[dict]
    seed_bound: float
    scan: dict
    warnings: list[str]

    def values(self) -> list[float]:
        return [s["value"] for s in self.seeds]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "theorem": self.theorem,
            "config": self.config,
            "exponents": self.exponents,
            "seeds": self.seeds,
            "tilde": self.tilde,
            "intervals": self.intervals,
            "intersections": self.intersections,
            "seed_bound": self.seed_bound,
            "scan": self.scan,
            "warnings": self.warnings,
        }


def _side_dict(side: Side) -> dict:
    e = side.exps
    return {
        "l": e.l, "alpha": e.alpha, "gamma": e.gamma, "kappa": e.kappa, "lambda": e.lam, "Lambda": e.Lam,
        "serrin": e.serrin, "sobolev": e.sobolev, "I_eta": None if not isinstance(e.I_eta, float) else e.I_eta,
        "regime": str(e.regime), "hamiltonian": e.hamiltonian, "K": side.K,
    }


def _config_dict(sys: PiecewiseSystem) -> dict:
    cfg = sys.config
    if cfg is None:
        return {"n": sys.n, "eta": sys.eta, "rho": sys.rho}
    return {k: getattr(cfg, k) for k in ("n", "eta", "K1", "K2", "q1", "q2", "delta1", "delta2", "rho")}


def _probe_class(fam: _Family, p: _Probe) -> dict:
    f = p.fit
    if f is None:
        return {"label": "unresolved", "zeros": p.zeros}
    if fam.name == "D":
        label = f"(R, {f.kind}, {p.zeros})"
    else:
        label = f"({f.kind}, fd, {p.zeros})"
    return {"label": label, "zeros": p.zeros, "rate": f.rate, "target": f.target or f"{f.sign:+d}"}


def find_structure(
    sys: PiecewiseSystem,
    k_max: int = 2,
    family: str = "D",
    *,
    horizon: float = FAR_HORIZON,
    scan_points: int = SCAN_POINTS,
    rtol: float = BISECT_RTOL,
    spiral_budget: float = SPIRAL_BUDGET,
    intersections: bool = True,
) -> StructureReport:
    """Locate D_0 < ... < D_kmax (or L_k) by scanning and bisecting in arc length.

    The arc length runs along M^{u,+} of side 1 (family D) or M^{s,+} of
    side 2 (family L).  A bracket is declared where the zero count or the
    terminal class changes between neighbouring probes.
    """
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max!r}")
    theorem = structure_theorem(sys, family)
    fam = _family(sys, family)
    _require_seed_manifold(fam)
    branch = trace_manifold(fam.near, fam.tag, NEAR_BUDGET, richardson=False)
    search = _Search(sys, fam, branch, horizon)

    lo = branch.seed_arclength * (1 + 1e-6)
    hi = branch.length * (1 - 1e-9)
    probes = _scan(search, lo, hi, scan_points, k_max + 1)
    probes = _refine_scan(search, probes)

    flips: list[Flip] = []
    for a, b in zip(probes, probes[1:]):
        if a.key != b.key:
            if a.fit is None or b.fit is None:
                search.warnings.append(f"unresolved probe between arclengths {a.arclength!r} and {b.arclength!r}")
                continue
            flips.append(_bisect(search, a, b, rtol))

    seeds: list[dict] = []
    tilde: list[dict] = []
    by_k: dict[int, Flip] = {}
    for f in flips:
        by_k.setdefault(f.zeros, f)
    missing = [k for k in range(k_max + 1) if k not in by_k]
    scanned = (search.seed_of(branch.time_at_arclength(lo)), probes[-1].value)
    if missing:
        raise BracketNotFound(
            f"no class flip for k = {missing} in seeds [{scanned[0]!r}, {scanned[1]!r}]",
            scanned, [(f.zeros, f.value) for f in flips],
        )

    sp_tags = ("s+", "s-") if family == "D" else ("u+", "u-")
    spirals = tuple(trace_manifold(fam.far, tag, spiral_budget, richardson=False) for tag in sp_tags)
    # decay exponent of the connecting solution at the far end
    expected = sys.n - 2 - sys.kappa if family == "D" else sys.kappa

    for k in range(k_max + 1):
        f = by_k[k]
        Qm = f.mid.Q
        f.tube = min(_tube_distance(np.array([Qm]), sp.trajectory) for sp in spirals)
        lo_v, hi_v = f.bracket()
        seeds.append({
            "k": k,
            "value": f.value,
            "bracket": [lo_v, hi_v],
            "arclength": f.mid.arclength,
            "arclength_bracket": [f.lo.arclength, f.hi.arclength],
            "rel_tol": f.rel_width,
            "zeros": f.zeros,
            "class": f"(R, fd, {k})",
            "approach": f.approach,
            "fd_exponent": f.exponent,
            "tube_distance": f.tube,
            "verified": bool(
                f.zeros == k
                and f.approach < APPROACH_RTOL
                and f.exponent is not None
                and abs(f.exponent - expected) <= EXPONENT_TOL
                and f.tube <= TUBE_TOL
            ),
            "Q": [Qm[0], Qm[1]],
        })
        if k >= 1:
            prev = [g for g in flips if g.zeros == k - 1 and g.mid.arclength < f.mid.arclength]
            t = prev[-1]
            tilde.append({
                "k": k,
                "value": t.value,
                "equals_previous": t is by_k[k - 1],
                "bracket": list(t.bracket()),
            })

    intervals = []
    bounds = [0.0] + [s["value"] for s in seeds]
    for a, b in zip(bounds, bounds[1:]):
        inside = [p for p in probes if a < p.value < b]
        labels = sorted({_probe_class(fam, p)["label"] for p in inside})
        intervals.append({"lo": a, "hi": b, "classes": labels, "probes": len(inside)})

    qtable = []
    if intersections:
        pts = intersect_manifolds(branch, spirals, sys, None, family)
        sp_by_tag = {sp.tag: sp for sp in spirals}
        for p in pts:
            if p.index > k_max:
                continue
            entry = {
                "j": p.index, "first": p.first, "x": p.x, "y": p.y, "branch": p.branch,
                "theta": p.theta, "theta_window": list(p.theta_window), "in_window": p.in_window,
                "parity_ok": p.parity_ok, "transversality": p.transversality,
                "arclength": p.arclength, "seed": p.seed,
            }
            if p.first:
                entry["reentry"] = reentry(branch, sp_by_tag[p.branch], p)
                entry["seed_match"] = abs(p.seed - seeds[p.index]["value"]) / abs(seeds[p.index]["value"])
            qtable.append(entry)

    bound = (
        branch.seed_offset * math.exp(fam.eig * branch.trajectory.t_end) * sys.rho**fam.weight
        if branch.termination == "blow-up" else math.inf
    )
    return StructureReport(
        family=family,
        theorem=theorem,
        config=_config_dict(sys),
        exponents={"side1": _side_dict(sys.side1), "side2": _side_dict(sys.side2)},
        seeds=seeds,
        tilde=tilde,
        intervals=intervals,
        intersections=qtable,
        seed_bound=bound,
        scan={
            "points": len(probes),
            "grid": scan_points,
            "seed_range": list(scanned),
            "flips": [[f.zeros, f.value] for f in flips],
            "evaluations": search.evaluations,
            "horizon": horizon,
            "rtol": rtol,
        },
        warnings=search.warnings,
    )


# ---------------------------------------------------------------- Kelvin duality


def kelvin_dual(cfg: ProblemConfig) -> ProblemConfig:
    """Configuration of w(s) = s^(2-n) u(1/s).

    The inner and outer reactions swap, the weights become
    (n-2)(q-2) - 4 - delta and the switch radius becomes 1/rho, so fast-decay
    seeds L of ``cfg`` are regular seeds d of the dual.
    """
    n = cfg.n
    return ProblemConfig(
        n=n, eta=cfg.eta, K1=cfg.K2, K2=cfg.K1, q1=cfg.q2, q2=cfg.q1,
        delta1=(n - 2) * (cfg.q2 - 2) - 4 - cfg.delta2,
        delta2=(n - 2) * (cfg.q1 - 2) - 4 - cfg.delta1,
        rho=1.0 / cfg.rho,
    )


# ---------------------------------------------------------------- scaling of maxima


@dataclass(frozen=True)
class ScalingCheck:
    Kbar: float
    rhobar: float
    q: float
    factor: float  # (rhobar^2 Kbar)^(-1/(q-2))
    base: dict
    scaled: dict
    errors: dict
    residual: float
    profile_error: float

    def to_dict(self) -> dict:
        return {
            "Kbar": self.Kbar, "rhobar": self.rhobar, "q": self.q, "factor": self.factor,
            "base": self.base, "scaled": self.scaled, "errors": self.errors,
            "residual": self.residual, "profile_error": self.profile_error,
        }


def _first_max(sys: PiecewiseSystem, D0: float, horizon: float) -> dict:
    _, traj = _solve_trajectory(sys, D0, "D", horizon)
    ev = [e for e in traj.events if e.kind == "x-axis"]
    if not ev:
        raise Unresolved("no critical point u' = 0 on the D_0 solution")
    e = ev[0]
    u, _, r = sys.to_radial(e.x, e.y, e.t, "left" if e.t <= 0 else "right")
    return {"D0": D0, "R0": r, "U0": u, "t": e.t}


def _radial_state(sys: PiecewiseSystem, traj: Trajectory, r: float) -> tuple[float, float]:
    t = math.log(r / sys.rho)
    st = traj.at(t)
    u, du, _ = sys.to_radial(st[0], st[1], t, "left" if t <= 0 else "right")
    return u, du


def scaling_report(
    base: ProblemConfig | StructureReport,
    Kbar: float,
    rhobar: float,
    base_D0: float | None = None,
    *,
    horizon: float = 60.0,
) -> ScalingCheck:
    """Check R_0, U_0, D_0 of the ground state under K -> Kbar K, rho -> rhobar rho.

    ``base`` is either a config or a D-family StructureReport whose D_0 is
    reused.  Requires q1 == q2 so that one amplitude scaling serves both sides.
    """
    if isinstance(base, StructureReport):
        if base.family != "D" or not base.seeds:
            raise DomainError("the base report must be a D-family report with D_0")
        cfg = ProblemConfig(**base.config)
        base_D0 = base.seeds[0]["value"] if base_D0 is None else base_D0
    else:
        cfg = base
    if cfg.q1 != cfg.q2 or cfg.delta1 != 0 or cfg.delta2 != 0:
        raise DomainError("the scaling of maxima needs q1 == q2 and delta1 == delta2 == 0")
    if not (Kbar > 0 and rhobar > 0):
        raise DomainError(f"Kbar and rhobar must be positive, got {Kbar!r}, {rhobar!r}")
    q = cfg.q1
    scaled_cfg = replace(cfg, K1=Kbar * cfg.K1, K2=Kbar * cfg.K2, rho=rhobar * cfg.rho)
    sys0 = PiecewiseSystem.from_config(cfg)
    sys1 = PiecewiseSystem.from_config(scaled_cfg)
    if base_D0 is None:
        base_D0 = find_structure(sys0, 0, "D", intersections=False).seeds[0]["value"]
    D1 = find_structure(sys1, 0, "D", intersections=False).seeds[0]["value"]
    b = _first_max(sys0, base_D0, horizon)
    s = _first_max(sys1, D1, horizon)
    factor = (rhobar**2 * Kbar) ** (-1.0 / (q - 2))
    errors = {
        "R0": abs(s["R0"] / b["R0"] - rhobar) / rhobar,
        "U0": abs(s["U0"] / b["U0"] - factor) / factor,
        "D0": abs(s["D0"] / b["D0"] - factor) / factor,
    }

    # w(r) = factor * u(r / rhobar) against the rescaled equation and the rescaled solve
    _, tr0 = _solve_trajectory(sys0, base_D0, "D", horizon)
    _, tr1 = _solve_trajectory(sys1, D1, "D", horizon)
    n, eta = cfg.n, cfg.eta
    rho1 = scaled_cfg.rho
    radii = rho1 * np.exp(np.linspace(-3.0, 3.0, 41))
    radii = radii[np.abs(np.log(radii / rho1)) > 1e-2]
    residual = 0.0
    prof = 0.0
    for r in radii:
        h = 1e-3 * r

        def w(rr):
            return factor * _radial_state(sys0, tr0, rr / rhobar)[0]

        def dw(rr):
            return factor / rhobar * _radial_state(sys0, tr0, rr / rhobar)[1]

        w0, w1 = w(r), dw(r)
        w2 = (-dw(r + 2 * h) + 8 * dw(r + h) - 8 * dw(r - h) + dw(r - 2 * h)) / (12 * h)
        K = scaled_cfg.K1 if r <= rho1 else scaled_cfg.K2
        terms = (w2, (n - 1) / r * w1, eta / r**2 * w0, K * w0 * abs(w0) ** (q - 2))
        scale = max(abs(v) for v in terms)
        residual = max(residual, abs(sum(terms)) / scale)
        u1 = _radial_state(sys1, tr1, r)[0]
        prof = max(prof, abs(w0 - u1) / max(abs(u1), 1e-300))
    return ScalingCheck(Kbar, rhobar, q, factor, b, s, errors, float(residual), float(prof))


def seed_scaling_error(
    sys: PiecewiseSystem,
    family: str = "D",
    seeds: tuple[float, float] = (1.0, 2.0),
    *,
    samples: int = 200,
    horizon: float = 10.0,
) -> float:
    """Sup relative error of the seed scaling law on the near side.

    On the near side the equation is a pure power law, so with
    ``mu = eig`` (Lambda_1 for D, lambda_2 for L) and ``a = alpha``,

        u(r, s) = (s / s0)^(a / mu) * u(r (s / s0)^(1 / mu), s0).

    Radii are kept where both arguments stay on the near side.
    """
    fam = _family(sys, family)
    s0, s1 = seeds
    if s0 <= 0 or s1 <= 0:
        raise DomainError(f"seeds must be positive, got {seeds!r}")
    _, tr0 = _solve_trajectory(sys, s0, family, horizon, require_switch=False)
    _, tr1 = _solve_trajectory(sys, s1, family, horizon, require_switch=False)
    c = s1 / s0
    # seeds are physical; the near side in units of rho
    scale = c ** (1.0 / fam.eig)
    amp = c ** (fam.near.alpha / fam.eig)
    edge = min(1.0, 1.0 / scale) if fam.name == "D" else max(1.0, 1.0 / scale)
    # times of tr1 at which both solutions are defined and on the near side
    lo0, hi0 = sorted((tr0.t_start, tr0.t_end))
    lo1, hi1 = sorted((tr1.t_start, tr1.t_end))
    shift = math.log(scale)
    lo, hi = max(lo1, lo0 - shift), min(hi1, hi0 - shift)
    if fam.name == "D":
        hi = min(hi, math.log(edge))
        lo = max(lo, hi - 12.0)
    else:
        lo = max(lo, math.log(edge))
        hi = min(hi, lo + 12.0)
    if not hi > lo:
        raise Unresolved("the two solves share no near-side range")
    ts = np.linspace(lo, hi, samples)[1:-1]
    worst = 0.0
    for t in ts:
        r = sys.rho * math.exp(t)
        u1 = _radial_state(sys, tr1, r)[0]
        u0 = _radial_state(sys, tr0, r * scale)[0]
        worst = max(worst, abs(amp * u0 - u1) / abs(u1))
    return worst
