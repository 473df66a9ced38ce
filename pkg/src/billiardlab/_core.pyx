# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event kernel for packed scenes.

Same algorithm as ``_kernel.advance`` restricted to flat or conformal
charts (n <= 3) and ellipsoidal bodies.  Kept line-for-line comparable
with the Python version so the two can be cross-checked.
"""

from libc.math cimport sqrt, fabs, pow, INFINITY, isfinite

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    MAXN = 3
    NS = 6  # state length 2 * MAXN

cdef double RTOL = 1e-10
cdef double ATOL = 1e-10
cdef double TOUCH_TOL = 1e-12
cdef double FTOL = 1e-13
cdef double XTOL = 1e-15
cdef int MAXIT = 100
cdef double SAFETY = 0.9
cdef double MIN_STEP = 1e-14

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef struct Sys:
    int kind
    double c
    int n
    int m
    double *centers
    double *inv_a2
    double *rot
    double *scale


cdef inline void rhs(Sys *s, double *y, double *out) nogil:
    cdef int n = s.n, i
    cdef double xx = 0.0, dv = 0.0, vv = 0.0, den
    cdef double df[MAXN]
    for i in range(n):
        out[i] = y[n + i]
    if s.kind == 0:
        for i in range(n):
            out[n + i] = 0.0
        return
    for i in range(n):
        xx += y[i] * y[i]
    den = 1.0 + s.c * xx
    for i in range(n):
        df[i] = -2.0 * s.c * y[i] / den
        dv += df[i] * y[n + i]
        vv += y[n + i] * y[n + i]
    for i in range(n):
        out[n + i] = -2.0 * dv * y[n + i] + vv * df[i]


cdef void dopri(Sys *s, double *y, double h, double *k1, double *ynew, double *err, double *k7) nogil:
    cdef int L = 2 * s.n, i
    cdef double k2[NS]
    cdef double k3[NS]
    cdef double k4[NS]
    cdef double k5[NS]
    cdef double k6[NS]
    cdef double yi[NS]
    for i in range(L):
        yi[i] = y[i] + h * A21 * k1[i]
    rhs(s, yi, k2)
    for i in range(L):
        yi[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
    rhs(s, yi, k3)
    for i in range(L):
        yi[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    rhs(s, yi, k4)
    for i in range(L):
        yi[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    rhs(s, yi, k5)
    for i in range(L):
        yi[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
    rhs(s, yi, k6)
    for i in range(L):
        ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
    rhs(s, ynew, k7)
    for i in range(L):
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])


cdef inline double body_q(Sys *s, int b, double *x, double *w) nogil:
    # w <- z / a^2 with z = R (x - c); returns q
    cdef int n = s.n, i, j
    cdef double q = 0.0, z
    for i in range(n):
        z = 0.0
        for j in range(n):
            z += s.rot[(b * n + i) * n + j] * (x[j] - s.centers[b * n + j])
        w[i] = z * s.inv_a2[b * n + i]
        q += z * w[i]
    return q


cdef inline double psi(Sys *s, int b, double *x) nogil:
    cdef double w[MAXN]
    cdef double q = body_q(s, b, x, w)
    return s.scale[b] * (sqrt(q) - 1.0)


cdef inline double dpsi(Sys *s, int b, double *y) nogil:
    # directional derivative along the velocity stored in y[n:]
    cdef int n = s.n, i, j
    cdef double w[MAXN]
    cdef double q = body_q(s, b, y, w), acc = 0.0, rv
    if q <= 0.0:
        return 0.0
    for i in range(n):
        rv = 0.0
        for j in range(n):
            rv += s.rot[(b * n + i) * n + j] * y[n + j]
        acc += w[i] * rv
    return s.scale[b] / sqrt(q) * acc


cdef struct Sub:
    Sys *s
    double *y
    double *k1
    double hs
    double *yend


cdef void sub_state(Sub *u, double t, double *out) nogil:
    cdef double err[NS]
    cdef double k7[NS]
    cdef int i
    if t == u.hs:
        for i in range(2 * u.s.n):
            out[i] = u.yend[i]
    elif t == 0.0:
        for i in range(2 * u.s.n):
            out[i] = u.y[i]
    else:
        dopri(u.s, u.y, t, u.k1, out, err, k7)


cdef double feval(Sub *u, int mode, int b, double t) nogil:
    cdef double z[NS]
    sub_state(u, t, z)
    if mode == 0:
        return psi(u.s, b, z)
    return dpsi(u.s, b, z)


cdef double illinois(Sub *u, int mode, int b, double a, double fa, double bb, double fb) nogil:
    cdef int side = 0, it
    cdef double c = bb, fc, lo, hi
    if fa == 0.0:
        return a
    if fb == 0.0:
        return bb
    for it in range(MAXIT):
        c = (a * fb - bb * fa) / (fb - fa)
        lo = a if a < bb else bb
        hi = bb if a < bb else a
        if not (lo <= c and c <= hi):
            c = 0.5 * (a + bb)
        fc = feval(u, mode, b, c)
        if fabs(fc) <= FTOL or fabs(bb - a) <= XTOL * (fabs(c) if fabs(c) > 1.0 else 1.0):
            return c
        if (fc > 0) == (fb > 0):
            bb = c
            fb = fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a = c
            fa = fc
            if side == 1:
                fb *= 0.5
            side = 1
    return c


cdef inline double factor(double err) nogil:
    cdef double f
    if err == 0.0:
        return 5.0
    f = SAFETY * pow(err, -0.2)
    if f < 0.2:
        f = 0.2
    if f > 5.0:
        f = 5.0
    return f


cdef int advance_c(Sys *s, double *y0, double t_max, int *skip, double hmax, double h0,
                   int *body_out, double *t_out, double *y_out, double *h_out) nogil:
    cdef int n = s.n, L = 2 * s.n, i, b
    cdef double y[NS]
    cdef double k1[NS]
    cdef double ynew[NS]
    cdef double errv[NS]
    cdef double k7[NS]
    cdef double tau = 0.0, h, hs, remaining, err, sc, ay, an, fe, f0, d0, d1, st, tm, fm
    cdef double best_t
    cdef int best_b, best_code
    cdef Sub u
    for i in range(L):
        y[i] = y0[i]
    h = h0 if h0 < hmax else hmax
    rhs(s, y, k1)
    u.s = s
    u.y = y
    u.k1 = k1
    u.yend = ynew
    while True:
        remaining = t_max - tau
        if remaining <= 0.0:
            for i in range(L):
                y_out[i] = y[i]
            body_out[0] = -1
            t_out[0] = tau
            h_out[0] = h
            return 0
        hs = h
        if hmax < hs:
            hs = hmax
        if remaining < hs:
            hs = remaining
        dopri(s, y, hs, k1, ynew, errv, k7)
        err = 0.0
        for i in range(L):
            ay = fabs(y[i])
            an = fabs(ynew[i])
            sc = ATOL + RTOL * (ay if ay > an else an)
            if fabs(errv[i]) / sc > err or not isfinite(errv[i]):
                err = fabs(errv[i]) / sc
        if not isfinite(err) or err > 1.0:
            if isfinite(err):
                f0 = SAFETY * pow(err, -0.2)
                h = hs * (f0 if f0 > 0.2 else 0.2)
            else:
                h = hs * 0.2
            if h < MIN_STEP:
                return -1
            continue
        u.hs = hs
        best_t = INFINITY
        best_b = -1
        best_code = 0
        for b in range(s.m):
            if skip[b]:
                continue
            fe = psi(s, b, ynew)
            if b == 0:
                if fe >= 0.0:
                    f0 = psi(s, 0, y)
                    st = illinois(&u, 0, 0, 0.0, f0, hs, fe)
                    if st < best_t:
                        best_t = st
                        best_b = 0
                        best_code = 1
                continue
            if fe <= 0.0:
                f0 = psi(s, b, y)
                st = illinois(&u, 0, b, 0.0, f0, hs, fe)
                if st < best_t:
                    best_t = st
                    best_b = b
                    best_code = 2
                continue
            d0 = dpsi(s, b, y)
            if d0 >= 0.0:
                continue
            d1 = dpsi(s, b, ynew)
            if d1 <= 0.0:
                continue
            tm = illinois(&u, 1, b, 0.0, d0, hs, d1)
            fm = feval(&u, 0, b, tm)
            if fabs(fm) <= TOUCH_TOL:
                if tm < best_t:
                    best_t = tm
                    best_b = b
                    best_code = 3
            elif fm < 0.0:
                f0 = psi(s, b, y)
                st = illinois(&u, 0, b, 0.0, f0, tm, fm)
                if st < best_t:
                    best_t = st
                    best_b = b
                    best_code = 2
        if best_b >= 0:
            sub_state(&u, best_t, y_out)
            body_out[0] = best_b
            t_out[0] = tau + best_t
            h_out[0] = factor(err) * hs
            return best_code
        for b in range(s.m):
            if skip[b]:
                fe = psi(s, b, ynew)
                if (b == 0 and fe < 0.0) or (b > 0 and fe > 0.0):
                    skip[b] = 0
        tau += hs
        for i in range(L):
            y[i] = ynew[i]
            k1[i] = k7[i]
        h = hs * factor(err)


def advance_packed(packed, y0, double t_max, skip, double hmax=INFINITY, double h0=0.05):
    """Compiled counterpart of ``_kernel.advance`` on a packed scene.

    Returns ``(code, body, t, y, h)``; raises ``StepSizeError`` on underflow.
    """
    cdef Sys s
    cdef cnp.ndarray[double, ndim=2, mode="c"] centers = np.ascontiguousarray(packed["centers"], dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] inv_a2 = np.ascontiguousarray(1.0 / np.asarray(packed["axes"], dtype=np.float64) ** 2)
    cdef cnp.ndarray[double, ndim=3, mode="c"] rot = np.ascontiguousarray(packed["rot"], dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] scale = np.ascontiguousarray(packed["scale"], dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ya = np.ascontiguousarray(y0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] yout = np.empty(ya.shape[0])
    cdef cnp.ndarray[int, ndim=1, mode="c"] sk = np.ascontiguousarray(skip, dtype=np.intc)
    cdef int body = -1, code
    cdef double t = 0.0, h = 0.0
    s.kind = int(packed["kind"])
    s.c = float(packed["c"])
    s.n = int(packed["n"])
    s.m = centers.shape[0]
    if s.n > MAXN or ya.shape[0] != 2 * s.n or sk.shape[0] != s.m:
        raise ValueError("packed scene shape mismatch")
    s.centers = &centers[0, 0]
    s.inv_a2 = &inv_a2[0, 0]
    s.rot = &rot[0, 0, 0]
    s.scale = &scale[0]
    with nogil:
        code = advance_c(&s, &ya[0], t_max, <int *> &sk[0], hmax, h0, &body, &t, &yout[0], &h)
    if code < 0:
        from .errors import StepSizeError
        raise StepSizeError("event kernel step underflow")
    return code, body, t, yout, h
