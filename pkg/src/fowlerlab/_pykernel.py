"""Pure-Python Dormand-Prince 5(4) kernel with dense output and event location.

Mirrors ``_ckernel.pyx`` operation by operation; selected when the compiled
extension is missing or ``FOWLERLAB_PURE=1``.  State is ``(x, y, s)`` where
``s`` is accumulated arc length (excluded from error control).
"""

from __future__ import annotations

import math

import numpy as np

# Dormand-Prince tableau
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = -71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40

# continuous extension, rows = stages (stage 2 row is zero), cols = theta^1..theta^4
P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

STATUS_HORIZON = 0
STATUS_BLOWUP = 1
STATUS_CONVERGED = 2
STATUS_LINE = 3
STATUS_STEPFAIL = 4
STATUS_MAXSTEPS = 5
STATUS_ARCLENGTH = 6

KIND_LINE = 0
KIND_BLOWUP = 1
KIND_CONVERGED = 2
KIND_ARCLENGTH = 3


def _dense_coeffs(ks):
    """Q[c][j]: component c, power theta^(j+1)."""
    Q = []
    for c in range(3):
        row = []
        for j in range(4):
            acc = 0.0
            for i in range(7):
                acc += ks[i][c] * P[i][j]
            row.append(acc)
        Q.append(row)
    return Q


def _dense_eval(y0, h, Q, th):
    th2 = th * th
    th3 = th2 * th
    th4 = th3 * th
    return [
        y0[c] + h * (Q[c][0] * th + Q[c][1] * th2 + Q[c][2] * th3 + Q[c][3] * th4)
        for c in range(3)
    ]



def _stages(rhs, x, yy, s, hs, k1, atol, rtol):
    k2 = rhs(x + hs * A21 * k1[0], yy + hs * A21 * k1[1])
    k3 = rhs(x + hs * (A31 * k1[0] + A32 * k2[0]),
             yy + hs * (A31 * k1[1] + A32 * k2[1]))
    k4 = rhs(x + hs * (A41 * k1[0] + A42 * k2[0] + A43 * k3[0]),
             yy + hs * (A41 * k1[1] + A42 * k2[1] + A43 * k3[1]))
    k5 = rhs(x + hs * (A51 * k1[0] + A52 * k2[0] + A53 * k3[0] + A54 * k4[0]),
             yy + hs * (A51 * k1[1] + A52 * k2[1] + A53 * k3[1] + A54 * k4[1]))
    k6 = rhs(x + hs * (A61 * k1[0] + A62 * k2[0] + A63 * k3[0] + A64 * k4[0] + A65 * k5[0]),
             yy + hs * (A61 * k1[1] + A62 * k2[1] + A63 * k3[1] + A64 * k4[1] + A65 * k5[1]))
    xn = x + hs * (B1 * k1[0] + B3 * k3[0] + B4 * k4[0] + B5 * k5[0] + B6 * k6[0])
    yn = yy + hs * (B1 * k1[1] + B3 * k3[1] + B4 * k4[1] + B5 * k5[1] + B6 * k6[1])
    sn = s + hs * (B1 * k1[2] + B3 * k3[2] + B4 * k4[2] + B5 * k5[2] + B6 * k6[2])
    if not (math.isfinite(xn) and math.isfinite(yn)):
        return k2, k3, k4, k5, k6, None, xn, yn, sn, math.inf
    k7 = rhs(xn, yn)
    ex = hs * (E1 * k1[0] + E3 * k3[0] + E4 * k4[0] + E5 * k5[0] + E6 * k6[0] + E7 * k7[0])
    ey = hs * (E1 * k1[1] + E3 * k3[1] + E4 * k4[1] + E5 * k5[1] + E6 * k6[1] + E7 * k7[1])
    scx = atol + rtol * max(abs(x), abs(xn))
    scy = atol + rtol * max(abs(yy), abs(yn))
    err = math.sqrt(((ex / scx) ** 2 + (ey / scy) ** 2) / 2)
    return k2, k3, k4, k5, k6, k7, xn, yn, sn, err


def run(alpha, gamma, eta, K, q, t0, x0, y0, s0, t_end, *,
        field=None, rtol=1e-10, atol=1e-12, h0=0.0, blowup=1e8,
        lines=(), terminal=(), targets=(), conv_tol=1e-9, dwell=1.0,
        max_steps=1_000_000, ev_tol=1e-10, s_max=math.inf):
    """Integrate one autonomous side from ``t0`` toward ``t_end``.

    ``field`` overrides the power-law right-hand side with ``field(x, y)``.
    ``lines`` are ``(a, b, c)`` with event function ``a x + b y - c``.
    Returns a dict of arrays; see ``integrate.Trajectory`` for meaning.
    """
    direction = 1.0 if t_end >= t0 else -1.0
    qm2 = q - 2.0
    nl = len(lines)
    lines = [tuple(map(float, ln)) for ln in lines]
    terminal = [bool(v) for v in terminal] if len(terminal) else [False] * nl
    targets = [tuple(map(float, p)) for p in targets]

    if field is None:
        def f(x, y):
            return alpha * x + y, -eta * x + gamma * y - K * x * abs(x) ** qm2
    else:
        f = field

    def rhs(x, y):
        fx, fy = f(x, y)
        return fx, fy, direction * math.sqrt(fx * fx + fy * fy)

    ts = [t0]
    xs = [[x0, y0, s0]]
    Qs = []
    events = []
    status = STATUS_HORIZON
    target_hit = -1
    message = ""

    t = t0
    y = [x0, y0, s0]
    k1 = rhs(x0, y0)
    if not (math.isfinite(x0) and math.isfinite(y0)):
        return _pack(ts, xs, Qs, events, STATUS_STEPFAIL, -1, "non-finite start")
    if math.hypot(x0, y0) > blowup:
        events.append((t0, KIND_BLOWUP, -1, x0, y0, s0, 0.0))
        return _pack(ts, xs, Qs, events, STATUS_BLOWUP, -1, "start beyond blow-up threshold")

    # initial step (Hairer-Wanner heuristic on the (x, y) components)
    if h0 > 0:
        h = h0
    else:
        sc0 = atol + rtol * abs(y[0])
        sc1 = atol + rtol * abs(y[1])
        d0 = math.sqrt(((y[0] / sc0) ** 2 + (y[1] / sc1) ** 2) / 2)
        d1 = math.sqrt(((k1[0] / sc0) ** 2 + (k1[1] / sc1) ** 2) / 2)
        h_try = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h_try = min(h_try, abs(t_end - t0)) if t_end != t0 else h_try
        xe = y[0] + direction * h_try * k1[0]
        ye = y[1] + direction * h_try * k1[1]
        k2e = rhs(xe, ye)
        d2 = math.sqrt((((k2e[0] - k1[0]) / sc0) ** 2 + ((k2e[1] - k1[1]) / sc1) ** 2) / 2) / h_try
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h_try * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h_try, h1)

    gvals = [ln[0] * y[0] + ln[1] * y[1] - ln[2] for ln in lines]
    entry = None  # (target index, entry time)
    steps = 0
    rejected = False

    while True:
        if t == t_end:
            status = STATUS_HORIZON
            break
        if steps >= max_steps:
            status = STATUS_MAXSTEPS
            message = f"max_steps={max_steps} reached at t={t!r}"
            break
        min_step = 10 * abs(math.nextafter(t, direction * math.inf) - t)
        if h < min_step:
            status = STATUS_STEPFAIL
            message = f"step size underflow at t={t!r}"
            break
        last = False
        if direction * (t + direction * h - t_end) >= 0:
            h = abs(t_end - t)
            last = True
        hs = direction * h
        x, yy, s = y
        try:
            k2, k3, k4, k5, k6, k7, xn, yn, sn, err = _stages(rhs, x, yy, s, hs, k1, atol, rtol)
        except OverflowError:
            h *= 0.2
            rejected = True
            continue
        if not math.isfinite(err) or err >= 1.0:
            h *= 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            rejected = True
            continue

        # accepted
        steps += 1
        t_new = t_end if last else t + hs
        ynew = [xn, yn, sn]
        Q = _dense_coeffs((k1, k2, k3, k4, k5, k6, k7))
        stop_theta = None
        stop_status = None
        stop_info = None

        # line events
        gnew = [ln[0] * xn + ln[1] * yn - ln[2] for ln in lines]
        for i in range(nl):
            ga, gb = gvals[i], gnew[i]
            if ga != 0.0 and (ga * gb < 0.0 or gb == 0.0):
                a_, b_, c_ = lines[i]
                lo, hi = 0.0, 1.0
                if gb != 0.0:
                    while (hi - lo) * h > ev_tol:
                        mid = 0.5 * (lo + hi)
                        ym = _dense_eval(y, hs, Q, mid)
                        gm = a_ * ym[0] + b_ * ym[1] - c_
                        if (gm < 0.0) == (ga < 0.0) and gm != 0.0:
                            lo = mid
                        else:
                            hi = mid
                th = hi
                ye = _dense_eval(y, hs, Q, th) if th < 1.0 else ynew
                te = t + hs * th if th < 1.0 else t_new
                events.append((te, KIND_LINE, i, ye[0], ye[1], ye[2], 1.0 if gb > ga else -1.0))
                if terminal[i] and (stop_theta is None or th < stop_theta):
                    stop_theta, stop_status, stop_info = th, STATUS_LINE, i

        # blow-up
        if math.hypot(xn, yn) > blowup:
            lo, hi = 0.0, 1.0
            while (hi - lo) * h > ev_tol:
                mid = 0.5 * (lo + hi)
                ym = _dense_eval(y, hs, Q, mid)
                if math.hypot(ym[0], ym[1]) > blowup:
                    hi = mid
                else:
                    lo = mid
            if stop_theta is None or hi < stop_theta:
                stop_theta, stop_status, stop_info = hi, STATUS_BLOWUP, -1

        # arc-length budget
        if sn > s_max:
            lo, hi = 0.0, 1.0
            while (hi - lo) * h > ev_tol:
                mid = 0.5 * (lo + hi)
                ym = _dense_eval(y, hs, Q, mid)
                if ym[2] > s_max:
                    hi = mid
                else:
                    lo = mid
            if stop_theta is None or hi < stop_theta:
                stop_theta, stop_status, stop_info = hi, STATUS_ARCLENGTH, -1

        if stop_theta is not None:
            # drop line events after the stop
            te_stop = t + hs * stop_theta
            events = [e for e in events if direction * (e[0] - te_stop) <= 0 or e[1] != KIND_LINE]
            if stop_theta < 1.0:
                ye = _dense_eval(y, hs, Q, stop_theta)
                sc = [1.0, stop_theta, stop_theta**2, stop_theta**3]
                Q = [[Q[c][j] * sc[j] for j in range(4)] for c in range(3)]
                ts.append(te_stop)
            else:
                ye = ynew
                ts.append(t_new)
            xs.append(ye)
            Qs.append((hs * stop_theta, Q))
            if stop_status == STATUS_BLOWUP:
                events.append((ts[-1], KIND_BLOWUP, -1, ye[0], ye[1], ye[2], 0.0))
            elif stop_status == STATUS_ARCLENGTH:
                events.append((ts[-1], KIND_ARCLENGTH, -1, ye[0], ye[1], ye[2], 0.0))
            status = stop_status
            target_hit = stop_info
            break

        ts.append(t_new)
        xs.append(ynew)
        Qs.append((hs, Q))
        t = t_new
        y = ynew
        k1 = k7
        gvals = gnew

        # convergence to a target with dwell
        if targets:
            inside = -1
            for j, (px, py) in enumerate(targets):
                if math.hypot(xn - px, yn - py) < conv_tol:
                    inside = j
                    break
            if inside < 0:
                entry = None
            elif entry is None or entry[0] != inside:
                entry = (inside, t)
            if entry is not None and abs(t - entry[1]) >= dwell:
                events.append((t, KIND_CONVERGED, inside, xn, yn, sn, 0.0))
                status = STATUS_CONVERGED
                target_hit = inside
                break

        if err == 0.0:
            factor = 10.0
        else:
            factor = min(10.0, 0.9 * err ** -0.2)
        if rejected:
            factor = min(1.0, factor)
        h *= factor
        rejected = False

    return _pack(ts, xs, Qs, events, status, target_hit, message)


def _pack(ts, xs, Qs, events, status, target_hit, message):
    n = len(Qs)
    hs = np.empty(n)
    Q = np.empty((n, 3, 4))
    for i, (h, q) in enumerate(Qs):
        hs[i] = h
        Q[i] = q
    ev = np.array(events, dtype=float).reshape(-1, 7)
    return {
        "t": np.asarray(ts, dtype=float),
        "y": np.asarray(xs, dtype=float).reshape(-1, 3),
        "h": hs,
        "Q": Q,
        "events": ev,
        "status": status,
        "target": target_hit,
        "message": message,
    }
