"""Adaptive Dormand-Prince integration of the planar fields with event detection.

The step loop lives in a compiled kernel (``_ckernel``) when it is built and
the side uses the power-law reaction; otherwise the pure-Python kernel runs
the same algorithm.  Set ``FOWLERLAB_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import csv
import io
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _pykernel
from .errors import StepFailure
from .fowler import PhasePoint, PiecewiseSystem, Side

try:  # pragma: no cover - exercised implicitly when the extension is built
    from . import _ckernel
except ImportError:  # pragma: no cover
    _ckernel = None

BLOWUP_THRESHOLD = 1e8
CONVERGENCE_TOL = 1e-9
CONVERGENCE_DWELL = 1.0
NONDEGENERACY_FLOOR = 1e-8
RTOL = 1e-10
ATOL = 1e-24
EVENT_TOL = 1e-10

_STATUS = {
    _pykernel.STATUS_HORIZON: "horizon",
    _pykernel.STATUS_BLOWUP: "blow-up",
    _pykernel.STATUS_CONVERGED: "converged",
    _pykernel.STATUS_LINE: "line",
    _pykernel.STATUS_STEPFAIL: "step-failure",
    _pykernel.STATUS_MAXSTEPS: "max-steps",
    _pykernel.STATUS_ARCLENGTH: "arclength",
}

_tolerances = {"rtol": RTOL, "atol": ATOL}


@contextmanager
def tolerances(rtol: float | None = None, atol: float | None = None):
    """Temporarily override the default integration tolerances."""
    saved = dict(_tolerances)
    for key, val in (("rtol", rtol), ("atol", atol)):
        if val is not None:
            if not val > 0:
                raise ValueError(f"{key} must be positive, got {val!r}")
            _tolerances[key] = float(val)
    try:
        yield dict(_tolerances)
    finally:
        _tolerances.clear()
        _tolerances.update(saved)


def current_tolerances() -> dict:
    return dict(_tolerances)


AXIS_LINES = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))  # x = 0, y = 0
AXIS_KINDS = ("y-axis", "x-axis")


def compiled_available() -> bool:
    return _ckernel is not None


def backend_name() -> str:
    if _ckernel is None or os.environ.get("FOWLERLAB_PURE"):
        return "python"
    return "compiled"


def _kernel_for(side: Side, backend: str | None):
    choice = backend or backend_name()
    if choice == "compiled" and _ckernel is not None and side.g.q is not None:
        return _ckernel.run, None
    if side.g.q is not None:
        return _pykernel.run, None
    return _pykernel.run, side.field


@dataclass(frozen=True)
class EventSpec:
    """Which events to detect.

    ``targets`` are ``(label, (x, y))`` pairs; reaching one within
    ``conv_tol`` and staying for ``dwell`` time units terminates.
    """

    axes: bool = True
    lines: tuple[tuple[float, float, float], ...] = ()
    terminal: tuple[bool, ...] = ()
    targets: tuple[tuple[str, tuple[float, float]], ...] = ()
    conv_tol: float = CONVERGENCE_TOL
    dwell: float = CONVERGENCE_DWELL
    blowup: float = BLOWUP_THRESHOLD
    max_arclength: float = math.inf
    stop_at_switch: bool = False
    #: restrict ``targets`` to one side of a piecewise system (1 or 2)
    target_side: int | None = None


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    x: float
    y: float
    s: float
    direction: float = 0.0
    side: int = 0
    label: str = ""


@dataclass
class Segment:
    """Accepted steps of one kernel run on one autonomous side."""

    side: int
    t: np.ndarray
    y: np.ndarray  # (N, 3): x, y, arc length
    h: np.ndarray  # signed step per interval
    Q: np.ndarray  # (N-1, 3, 4) dense-output coefficients

    def at(self, tq: float) -> np.ndarray:
        n = len(self.h)
        if n == 0:
            return self.y[0].copy()
        asc = self.h[0] > 0
        if asc:
            i = int(np.searchsorted(self.t, tq, side="right")) - 1
        else:
            i = int(np.searchsorted(-self.t, -tq, side="right")) - 1
        i = min(max(i, 0), n - 1)
        th = (tq - self.t[i]) / self.h[i]
        q = self.Q[i]
        return self.y[i] + self.h[i] * (q[:, 0] * th + q[:, 1] * th**2 + q[:, 2] * th**3 + q[:, 3] * th**4)


@dataclass
class Trajectory:
    segments: list[Segment]
    events: list[Event]
    termination: str
    direction: int
    target: str = ""
    message: str = ""
    system: Side | PiecewiseSystem | None = field(default=None, repr=False)

    @property
    def t(self) -> np.ndarray:
        return self._cat(lambda s: s.t)

    @property
    def x(self) -> np.ndarray:
        return self._cat(lambda s: s.y[:, 0])

    @property
    def y(self) -> np.ndarray:
        return self._cat(lambda s: s.y[:, 1])

    @property
    def s(self) -> np.ndarray:
        return self._cat(lambda s: s.y[:, 2])

    @property
    def side(self) -> np.ndarray:
        return self._cat(lambda s: np.full(len(s.t), s.side, dtype=int))

    def _cat(self, get):
        parts = []
        for k, seg in enumerate(self.segments):
            arr = get(seg)
            parts.append(arr if k == 0 else arr[1:])
        return np.concatenate(parts) if parts else np.empty(0)

    @property
    def t_start(self) -> float:
        return float(self.segments[0].t[0])

    @property
    def t_end(self) -> float:
        return float(self.segments[-1].t[-1])

    @property
    def final(self) -> PhasePoint:
        seg = self.segments[-1]
        return PhasePoint(float(seg.y[-1, 0]), float(seg.y[-1, 1]), float(seg.t[-1]))

    def at(self, tq: float) -> np.ndarray:
        """Dense-output state (x, y, arc length) at time ``tq``."""
        for seg in self.segments:
            lo, hi = sorted((seg.t[0], seg.t[-1]))
            if lo <= tq <= hi:
                return seg.at(tq)
        raise ValueError(f"t = {tq!r} outside the integrated span [{self.t_start}, {self.t_end}]")

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def energy(self) -> np.ndarray:
        sides = self._sides()
        return np.array([sides[k].energy(xv, yv) for xv, yv, k in zip(self.x, self.y, self.side)])

    def _sides(self) -> dict[int, Side]:
        if isinstance(self.system, PiecewiseSystem):
            return {1: self.system.side1, 2: self.system.side2}
        return {0: self.system, 1: self.system, 2: self.system}

    def to_csv(self, fh=None) -> str:
        """Rows per accepted step plus flagged event rows."""
        return trajectory_csv(self, fh)


def _run_side(side: Side, side_idx: int, t0, state, t_end, spec: EventSpec, rtol, atol, backend):
    kernel, fieldfn = _kernel_for(side, backend)
    lines = list(AXIS_LINES) if spec.axes else []
    terminal = [False] * len(lines)
    lines += list(spec.lines)
    terminal += list(spec.terminal) + [False] * (len(spec.lines) - len(spec.terminal))
    active = spec.target_side is None or spec.target_side == side_idx
    targets = [p for _, p in spec.targets] if active else []
    res = kernel(
        side.alpha, side.gamma, side.eta, side.K, side.g.q if side.g.q is not None else 3.0,
        float(t0), float(state[0]), float(state[1]), float(state[2]), float(t_end),
        field=fieldfn, rtol=rtol, atol=atol, blowup=spec.blowup,
        lines=lines, terminal=terminal, targets=targets,
        conv_tol=spec.conv_tol, dwell=spec.dwell, ev_tol=EVENT_TOL,
        s_max=spec.max_arclength,
    )
    seg = Segment(side_idx, res["t"], res["y"], res["h"], res["Q"])
    naxes = len(AXIS_LINES) if spec.axes else 0
    events = []
    for te, kind, idx, xe, ye, se, dirn in res["events"]:
        idx = int(idx)
        if kind == _pykernel.KIND_LINE:
            name = AXIS_KINDS[idx] if idx < naxes else "line"
            label = "" if idx < naxes else str(idx - naxes)
            events.append(Event(float(te), name, float(xe), float(ye), float(se), float(dirn), side_idx, label))
        elif kind == _pykernel.KIND_BLOWUP:
            events.append(Event(float(te), "blow-up", float(xe), float(ye), float(se), 0.0, side_idx))
        elif kind == _pykernel.KIND_ARCLENGTH:
            events.append(Event(float(te), "arclength", float(xe), float(ye), float(se), 0.0, side_idx))
        else:
            events.append(Event(float(te), "converged", float(xe), float(ye), float(se), 0.0, side_idx,
                                spec.targets[idx][0]))
    status = _STATUS[res["status"]]
    target = spec.targets[res["target"]][0] if status == "converged" else ""
    if status == "line":
        target = str(res["target"] - naxes)
    return seg, events, status, target, res["message"]


def integrate(
    system: Side | PiecewiseSystem,
    start: PhasePoint | Sequence[float],
    direction: int = 1,
    horizon: float = 100.0,
    events: EventSpec | None = None,
    *,
    rtol: float | None = None,
    atol: float | None = None,
    s0: float = 0.0,
    backend: str | None = None,
) -> Trajectory:
    """Integrate from ``start`` for ``horizon`` time units in ``direction``.

    For a piecewise system no step straddles t = 0: the run stops exactly at
    the switch, records a ``switch`` event and continues on the other side.
    Raises StepFailure (with ``.trajectory``) if the step size underflows.
    """
    spec = events or EventSpec()
    rtol = _tolerances["rtol"] if rtol is None else rtol
    atol = _tolerances["atol"] if atol is None else atol
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    direction = 1 if direction >= 0 else -1
    x0, y0 = float(start[0]), float(start[1])
    t0 = float(start[2]) if len(start) > 2 else 0.0
    t_final = t0 + direction * horizon
    state = (x0, y0, s0)

    plan: list[tuple[Side, int, float, float]] = []
    if isinstance(system, PiecewiseSystem):
        if direction > 0:
            if t0 < 0 < t_final:
                plan = [(system.side1, 1, t0, 0.0), (system.side2, 2, 0.0, t_final)]
            else:
                plan = [(system.side1 if t_final <= 0 else system.side2, 1 if t_final <= 0 else 2, t0, t_final)]
        else:
            if t_final < 0 < t0:
                plan = [(system.side2, 2, t0, 0.0), (system.side1, 1, 0.0, t_final)]
            else:
                plan = [(system.side2 if t_final >= 0 else system.side1, 2 if t_final >= 0 else 1, t0, t_final)]
    else:
        plan = [(system, 0, t0, t_final)]

    segments: list[Segment] = []
    all_events: list[Event] = []
    termination = "horizon"
    target = ""
    message = ""
    for k, (side, idx, ta, tb) in enumerate(plan):
        seg, evs, status, target, message = _run_side(side, idx, ta, state, tb, spec, rtol, atol, backend)
        segments.append(seg)
        all_events.extend(evs)
        termination = status
        if status != "horizon":
            break
        if k + 1 < len(plan):
            state = tuple(seg.y[-1])
            all_events.append(Event(0.0, "switch", state[0], state[1], state[2], float(direction), idx))
            if spec.stop_at_switch:
                termination = "switch"
                break
    if termination == "horizon":
        fin = segments[-1].y[-1]
        all_events.append(Event(float(segments[-1].t[-1]), "horizon", fin[0], fin[1], fin[2], 0.0, segments[-1].side))
    traj = Trajectory(segments, all_events, termination, direction, target, message, system)
    if termination == "step-failure":
        last = traj.final
        err = StepFailure(message, last.t, (last.x, last.y))
        err.trajectory = traj
        raise err
    return traj


def _fmt(v) -> str:
    return format(float(v), ".17g")


def trajectory_csv(traj: Trajectory, fh=None) -> str:
    """CSV with columns t, r, x, y, u, du, E, side, event."""
    system = traj.system
    rho = system.rho if isinstance(system, PiecewiseSystem) else 1.0
    sides = traj._sides()
    rows = []
    for seg in traj.segments:
        side = sides[seg.side]
        for k in range(len(seg.t)):
            rows.append((float(seg.t[k]), 0, seg.y[k, 0], seg.y[k, 1], seg.side, ""))
    for ev in traj.events:
        rows.append((ev.t, 1, ev.x, ev.y, ev.side, ev.kind + (f":{ev.label}" if ev.label else "")))
    # step rows then event rows at equal time; stable in the integration direction
    rows.sort(key=lambda r: (traj.direction * r[0], r[1]))
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "r", "x", "y", "u", "du", "E", "side", "event"])
    for t, _, x, y, sidx, evname in rows:
        side = sides[sidx]
        a = side.alpha
        u = x * math.exp(-a * t)
        du = y * math.exp(-(a + 1) * t) / rho
        r = math.exp(t) * rho
        w.writerow([_fmt(t), _fmt(r), _fmt(x), _fmt(y), _fmt(u), _fmt(du), _fmt(side.energy(x, y)), sidx, evname])
    return buf.getvalue() if fh is None else ""
