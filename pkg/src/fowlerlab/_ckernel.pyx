# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) kernel for the power-law side.

Same algorithm and operation order as ``_pykernel.run``; only the
power-law right-hand side is supported here.
"""

import numpy as np

from libc.math cimport fabs, pow, sqrt, hypot, nextafter, isfinite, INFINITY
from libc.stdlib cimport malloc, realloc, free

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = -71.0 / 57600, E3 = 71.0 / 16695, E4 = -71.0 / 1920, E5 = 17253.0 / 339200, E6 = -22.0 / 525, E7 = 1.0 / 40

cdef double P[7][4]
P[0][:] = [1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432]
P[1][:] = [0.0, 0.0, 0.0, 0.0]
P[2][:] = [0.0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933, 87487479700.0 / 32700410799]
P[3][:] = [0.0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072]
P[4][:] = [0.0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408, 701980252875.0 / 199316789632]
P[5][:] = [0.0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844]
P[6][:] = [0.0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423]

DEF STATUS_HORIZON = 0
DEF STATUS_BLOWUP = 1
DEF STATUS_CONVERGED = 2
DEF STATUS_LINE = 3
DEF STATUS_STEPFAIL = 4
DEF STATUS_MAXSTEPS = 5
DEF STATUS_ARCLENGTH = 6
DEF KIND_LINE = 0
DEF KIND_BLOWUP = 1
DEF KIND_CONVERGED = 2
DEF KIND_ARCLENGTH = 3


cdef struct Params:
    double alpha, gamma, eta, K, qm2, direction


cdef inline void rhs(Params* p, double x, double y, double* out) noexcept nogil:
    cdef double fx = p.alpha * x + y
    cdef double fy = -p.eta * x + p.gamma * y - p.K * x * pow(fabs(x), p.qm2)
    out[0] = fx
    out[1] = fy
    out[2] = p.direction * sqrt(fx * fx + fy * fy)


cdef inline void dense_eval(double* y0, double h, double* Q, double th, double* out) noexcept nogil:
    cdef double th2 = th * th
    cdef double th3 = th2 * th
    cdef double th4 = th3 * th
    cdef int c
    for c in range(3):
        out[c] = y0[c] + h * (Q[4 * c] * th + Q[4 * c + 1] * th2 + Q[4 * c + 2] * th3 + Q[4 * c + 3] * th4)


cdef class _Buf:
    """Growable double buffer with fixed record width."""
    cdef double* data
    cdef Py_ssize_t n, cap, width

    def __cinit__(self, Py_ssize_t width, Py_ssize_t cap=256):
        self.width = width
        self.cap = cap
        self.n = 0
        self.data = <double*> malloc(cap * width * sizeof(double))
        if self.data == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.data)

    cdef double* push(self) except NULL:
        cdef double* nd
        if self.n == self.cap:
            nd = <double*> realloc(self.data, 2 * self.cap * self.width * sizeof(double))
            if nd == NULL:
                raise MemoryError()
            self.data = nd
            self.cap *= 2
        self.n += 1
        return self.data + (self.n - 1) * self.width

    cdef object to_array(self):
        arr = np.empty((self.n, self.width))
        cdef double[:, ::1] view = arr
        cdef Py_ssize_t i, j
        for i in range(self.n):
            for j in range(self.width):
                view[i, j] = self.data[i * self.width + j]
        return arr


def run(double alpha, double gamma, double eta, double K, double q,
        double t0, double x0, double y0, double s0, double t_end, *,
        field=None, double rtol=1e-10, double atol=1e-12, double h0=0.0,
        double blowup=1e8, lines=(), terminal=(), targets=(),
        double conv_tol=1e-9, double dwell=1.0, long max_steps=1000000,
        double ev_tol=1e-10, double s_max=INFINITY):
    if field is not None:
        raise TypeError("compiled kernel supports only the power-law field")
    cdef Params p
    p.alpha = alpha
    p.gamma = gamma
    p.eta = eta
    p.K = K
    p.qm2 = q - 2.0
    p.direction = 1.0 if t_end >= t0 else -1.0
    cdef double direction = p.direction

    cdef Py_ssize_t nl = len(lines), nt = len(targets), i, j, c
    cdef double[:, ::1] L = np.ascontiguousarray(np.asarray(lines, dtype=float).reshape(nl, 3))
    term_arr = np.zeros(nl, dtype=np.int8)
    if len(terminal):
        term_arr[:] = np.asarray(terminal, dtype=bool)
    cdef signed char[::1] term = term_arr
    cdef double[:, ::1] T = np.ascontiguousarray(np.asarray(targets, dtype=float).reshape(nt, 2))

    cdef _Buf tbuf = _Buf(1)
    cdef _Buf ybuf = _Buf(3)
    cdef _Buf qbuf = _Buf(13)
    cdef _Buf ebuf = _Buf(7)
    cdef double* rec

    cdef double t = t0
    cdef double y[3]
    cdef double ynew[3]
    cdef double ye[3]
    cdef double ym[3]
    cdef double k[7][3]
    cdef double Q[12]
    y[0] = x0
    y[1] = y0
    y[2] = s0
    rec = tbuf.push()
    rec[0] = t0
    rec = ybuf.push()
    rec[0] = x0
    rec[1] = y0
    rec[2] = s0

    cdef int status = STATUS_HORIZON
    cdef long target_hit = -1
    message = ""

    if not (isfinite(x0) and isfinite(y0)):
        return _pack(tbuf, ybuf, qbuf, ebuf, STATUS_STEPFAIL, -1, "non-finite start")
    rhs(&p, x0, y0, k[0])
    if hypot(x0, y0) > blowup:
        rec = ebuf.push()
        rec[0] = t0; rec[1] = KIND_BLOWUP; rec[2] = -1; rec[3] = x0; rec[4] = y0; rec[5] = s0; rec[6] = 0.0
        return _pack(tbuf, ybuf, qbuf, ebuf, STATUS_BLOWUP, -1, "start beyond blow-up threshold")

    cdef double h, sc0, sc1, d0, d1, d2, h_try, h1, xe, yev
    cdef double k2e[3]
    if h0 > 0:
        h = h0
    else:
        sc0 = atol + rtol * fabs(y[0])
        sc1 = atol + rtol * fabs(y[1])
        d0 = sqrt(((y[0] / sc0) ** 2 + (y[1] / sc1) ** 2) / 2)
        d1 = sqrt(((k[0][0] / sc0) ** 2 + (k[0][1] / sc1) ** 2) / 2)
        h_try = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        if t_end != t0:
            h_try = min(h_try, fabs(t_end - t0))
        xe = y[0] + direction * h_try * k[0][0]
        yev = y[1] + direction * h_try * k[0][1]
        rhs(&p, xe, yev, k2e)
        d2 = sqrt((((k2e[0] - k[0][0]) / sc0) ** 2 + ((k2e[1] - k[0][1]) / sc1) ** 2) / 2) / h_try
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h_try * 1e-3)
        else:
            h1 = pow(0.01 / max(d1, d2), 0.2)
        h = min(100 * h_try, h1)

    gvals = np.empty(nl)
    gnew_arr = np.empty(nl)
    cdef double[::1] gv = gvals
    cdef double[::1] gn = gnew_arr
    for i in range(nl):
        gv[i] = L[i, 0] * y[0] + L[i, 1] * y[1] - L[i, 2]

    cdef long entry_idx = -1
    cdef double entry_t = 0.0
    cdef long steps = 0
    cdef bint rejected = False, last
    cdef double min_step, hs, x, yy, s, xn, yn, sn, ex, ey, scx, scy, err, t_new
    cdef double stop_theta, lo, hi, mid, gm, ga, gb, th, te, te_stop, factor
    cdef int stop_status
    cdef long stop_info, inside
    cdef bint have_stop
    cdef Py_ssize_t ev_start

    while True:
        if t == t_end:
            status = STATUS_HORIZON
            break
        if steps >= max_steps:
            status = STATUS_MAXSTEPS
            message = f"max_steps={max_steps} reached at t={t!r}"
            break
        min_step = 10 * fabs(nextafter(t, direction * INFINITY) - t)
        if h < min_step:
            status = STATUS_STEPFAIL
            message = f"step size underflow at t={t!r}"
            break
        last = False
        if direction * (t + direction * h - t_end) >= 0:
            h = fabs(t_end - t)
            last = True
        hs = direction * h
        x = y[0]
        yy = y[1]
        s = y[2]
        rhs(&p, x + hs * A21 * k[0][0], yy + hs * A21 * k[0][1], k[1])
        rhs(&p, x + hs * (A31 * k[0][0] + A32 * k[1][0]),
            yy + hs * (A31 * k[0][1] + A32 * k[1][1]), k[2])
        rhs(&p, x + hs * (A41 * k[0][0] + A42 * k[1][0] + A43 * k[2][0]),
            yy + hs * (A41 * k[0][1] + A42 * k[1][1] + A43 * k[2][1]), k[3])
        rhs(&p, x + hs * (A51 * k[0][0] + A52 * k[1][0] + A53 * k[2][0] + A54 * k[3][0]),
            yy + hs * (A51 * k[0][1] + A52 * k[1][1] + A53 * k[2][1] + A54 * k[3][1]), k[4])
        rhs(&p, x + hs * (A61 * k[0][0] + A62 * k[1][0] + A63 * k[2][0] + A64 * k[3][0] + A65 * k[4][0]),
            yy + hs * (A61 * k[0][1] + A62 * k[1][1] + A63 * k[2][1] + A64 * k[3][1] + A65 * k[4][1]), k[5])
        xn = x + hs * (B1 * k[0][0] + B3 * k[2][0] + B4 * k[3][0] + B5 * k[4][0] + B6 * k[5][0])
        yn = yy + hs * (B1 * k[0][1] + B3 * k[2][1] + B4 * k[3][1] + B5 * k[4][1] + B6 * k[5][1])
        sn = s + hs * (B1 * k[0][2] + B3 * k[2][2] + B4 * k[3][2] + B5 * k[4][2] + B6 * k[5][2])
        if not (isfinite(xn) and isfinite(yn)):
            err = INFINITY
        else:
            rhs(&p, xn, yn, k[6])
            ex = hs * (E1 * k[0][0] + E3 * k[2][0] + E4 * k[3][0] + E5 * k[4][0] + E6 * k[5][0] + E7 * k[6][0])
            ey = hs * (E1 * k[0][1] + E3 * k[2][1] + E4 * k[3][1] + E5 * k[4][1] + E6 * k[5][1] + E7 * k[6][1])
            scx = atol + rtol * max(fabs(x), fabs(xn))
            scy = atol + rtol * max(fabs(yy), fabs(yn))
            err = sqrt(((ex / scx) ** 2 + (ey / scy) ** 2) / 2)
        if not isfinite(err) or err >= 1.0:
            if not isfinite(err):
                h *= 0.2
            else:
                h *= max(0.2, 0.9 * pow(err, -0.2))
            rejected = True
            continue

        steps += 1
        t_new = t_end if last else t + hs
        ynew[0] = xn
        ynew[1] = yn
        ynew[2] = sn
        for c in range(3):
            for j in range(4):
                Q[4 * c + j] = 0.0
                for i in range(7):
                    Q[4 * c + j] += k[i][c] * P[i][j]
        have_stop = False
        stop_theta = 2.0
        stop_status = STATUS_HORIZON
        stop_info = -1
        ev_start = ebuf.n

        for i in range(nl):
            gn[i] = L[i, 0] * xn + L[i, 1] * yn - L[i, 2]
            ga = gv[i]
            gb = gn[i]
            if ga != 0.0 and (ga * gb < 0.0 or gb == 0.0):
                lo = 0.0
                hi = 1.0
                if gb != 0.0:
                    while (hi - lo) * h > ev_tol:
                        mid = 0.5 * (lo + hi)
                        dense_eval(y, hs, Q, mid, ym)
                        gm = L[i, 0] * ym[0] + L[i, 1] * ym[1] - L[i, 2]
                        if (gm < 0.0) == (ga < 0.0) and gm != 0.0:
                            lo = mid
                        else:
                            hi = mid
                th = hi
                if th < 1.0:
                    dense_eval(y, hs, Q, th, ye)
                    te = t + hs * th
                else:
                    ye[0] = ynew[0]; ye[1] = ynew[1]; ye[2] = ynew[2]
                    te = t_new
                rec = ebuf.push()
                rec[0] = te; rec[1] = KIND_LINE; rec[2] = i; rec[3] = ye[0]; rec[4] = ye[1]; rec[5] = ye[2]
                rec[6] = 1.0 if gb > ga else -1.0
                if term[i] and (not have_stop or th < stop_theta):
                    have_stop = True
                    stop_theta = th
                    stop_status = STATUS_LINE
                    stop_info = i

        if hypot(xn, yn) > blowup:
            lo = 0.0
            hi = 1.0
            while (hi - lo) * h > ev_tol:
                mid = 0.5 * (lo + hi)
                dense_eval(y, hs, Q, mid, ym)
                if hypot(ym[0], ym[1]) > blowup:
                    hi = mid
                else:
                    lo = mid
            if not have_stop or hi < stop_theta:
                have_stop = True
                stop_theta = hi
                stop_status = STATUS_BLOWUP
                stop_info = -1

        if sn > s_max:
            lo = 0.0
            hi = 1.0
            while (hi - lo) * h > ev_tol:
                mid = 0.5 * (lo + hi)
                dense_eval(y, hs, Q, mid, ym)
                if ym[2] > s_max:
                    hi = mid
                else:
                    lo = mid
            if not have_stop or hi < stop_theta:
                have_stop = True
                stop_theta = hi
                stop_status = STATUS_ARCLENGTH
                stop_info = -1

        if have_stop:
            te_stop = t + hs * stop_theta
            _drop_events_after(ebuf, ev_start, te_stop, direction)
            rec = tbuf.push()
            if stop_theta < 1.0:
                dense_eval(y, hs, Q, stop_theta, ye)
                for c in range(3):
                    Q[4 * c + 1] *= stop_theta
                    Q[4 * c + 2] *= stop_theta * stop_theta
                    Q[4 * c + 3] *= stop_theta * stop_theta * stop_theta
                rec[0] = te_stop
            else:
                ye[0] = ynew[0]; ye[1] = ynew[1]; ye[2] = ynew[2]
                rec[0] = t_new
            te = rec[0]
            rec = ybuf.push()
            rec[0] = ye[0]; rec[1] = ye[1]; rec[2] = ye[2]
            rec = qbuf.push()
            rec[0] = hs * stop_theta
            for j in range(12):
                rec[1 + j] = Q[j]
            if stop_status == STATUS_BLOWUP:
                rec = ebuf.push()
                rec[0] = te; rec[1] = KIND_BLOWUP; rec[2] = -1; rec[3] = ye[0]; rec[4] = ye[1]; rec[5] = ye[2]; rec[6] = 0.0
            elif stop_status == STATUS_ARCLENGTH:
                rec = ebuf.push()
                rec[0] = te; rec[1] = KIND_ARCLENGTH; rec[2] = -1; rec[3] = ye[0]; rec[4] = ye[1]; rec[5] = ye[2]; rec[6] = 0.0
            status = stop_status
            target_hit = stop_info
            break

        rec = tbuf.push()
        rec[0] = t_new
        rec = ybuf.push()
        rec[0] = xn; rec[1] = yn; rec[2] = sn
        rec = qbuf.push()
        rec[0] = hs
        for j in range(12):
            rec[1 + j] = Q[j]
        t = t_new
        y[0] = xn; y[1] = yn; y[2] = sn
        for c in range(3):
            k[0][c] = k[6][c]
        for i in range(nl):
            gv[i] = gn[i]

        if nt > 0:
            inside = -1
            for j in range(nt):
                if hypot(xn - T[j, 0], yn - T[j, 1]) < conv_tol:
                    inside = j
                    break
            if inside < 0:
                entry_idx = -1
            elif entry_idx != inside:
                entry_idx = inside
                entry_t = t
            if entry_idx >= 0 and fabs(t - entry_t) >= dwell:
                rec = ebuf.push()
                rec[0] = t; rec[1] = KIND_CONVERGED; rec[2] = inside; rec[3] = xn; rec[4] = yn; rec[5] = sn; rec[6] = 0.0
                status = STATUS_CONVERGED
                target_hit = inside
                break

        if err == 0.0:
            factor = 10.0
        else:
            factor = min(10.0, 0.9 * pow(err, -0.2))
        if rejected:
            factor = min(1.0, factor)
        h *= factor
        rejected = False

    return _pack(tbuf, ybuf, qbuf, ebuf, status, target_hit, message)


cdef void _drop_events_after(_Buf ebuf, Py_ssize_t start, double te_stop, double direction):
    # keeps event-buffer order; only line events of the current step can be late
    cdef Py_ssize_t i, w = start, j
    for i in range(start, ebuf.n):
        if direction * (ebuf.data[i * 7] - te_stop) <= 0 or ebuf.data[i * 7 + 1] != KIND_LINE:
            if w != i:
                for j in range(7):
                    ebuf.data[w * 7 + j] = ebuf.data[i * 7 + j]
            w += 1
    ebuf.n = w


cdef object _pack(_Buf tbuf, _Buf ybuf, _Buf qbuf, _Buf ebuf, int status, long target_hit, message):
    q = qbuf.to_array()
    return {
        "t": tbuf.to_array().reshape(-1),
        "y": ybuf.to_array(),
        "h": q[:, 0].copy(),
        "Q": q[:, 1:].reshape(-1, 3, 4).copy(),
        "events": ebuf.to_array(),
        "status": status,
        "target": target_hit,
        "message": message,
    }
