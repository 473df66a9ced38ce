"""Pure-Python event kernel: advance a geodesic until it meets a body.

Bodies are indexed ``0`` (the exterior body S) and ``1..d`` (obstacles).
:func:`advance` returns one of the codes below together with the body index,
elapsed time and packed state ``[x, v]`` at the event.

The compiled core in ``_core.pyx`` implements the identical algorithm for
packed scenes (flat or conformal chart, ellipsoidal bodies).
"""

import math

import numpy as np

from ._ode import MIN_STEP, SAFETY, dopri_step, step_factor
from .errors import StepSizeError

CUTOFF = 0
EXIT = 1
CROSS = 2
TOUCH = 3

RTOL = 1e-10
ATOL = 1e-10
TOUCH_TOL = 1e-12
FTOL = 1e-13
XTOL = 1e-15
MAXIT = 100


def illinois(F, a, fa, b, fb, ftol=FTOL, xtol=XTOL):
    """Root of ``F`` on ``[a, b]`` given a sign change, by Illinois regula falsi."""
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    side = 0
    c = b
    for _ in range(MAXIT):
        c = (a * fb - b * fa) / (fb - fa)
        if not (min(a, b) <= c <= max(a, b)):
            c = 0.5 * (a + b)
        fc = F(c)
        if abs(fc) <= ftol or abs(b - a) <= xtol * max(1.0, abs(c)):
            return c
        if (fc > 0) == (fb > 0):
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
    return c


class PySystem:
    """Callable-based system: any chart, any bodies."""

    def __init__(self, chart, bodies):
        self.chart = chart
        self.bodies = list(bodies)
        self.n = chart.dim
        self.rhs = chart.geodesic_rhs

    def psi(self, b, x):
        return self.bodies[b].psi(x)

    def dpsi(self, b, x, v):
        return float(self.bodies[b].grad(x) @ v)


class PackedSystem:
    """Python mirror of the compiled core's data layout.

    ``packed`` is a dict with ``kind`` (0 flat, 1 conformal), ``c``, ``n``
    and arrays ``centers (m, n)``, ``axes (m, n)``, ``rot (m, n, n)``,
    ``scale (m,)`` for the ``m = d + 1`` bodies.
    """

    def __init__(self, packed):
        self.kind = int(packed["kind"])
        self.c = float(packed["c"])
        self.n = int(packed["n"])
        self.centers = np.asarray(packed["centers"], dtype=float)
        self.inv_a2 = 1.0 / np.asarray(packed["axes"], dtype=float) ** 2
        self.rot = np.asarray(packed["rot"], dtype=float)
        self.scale = np.asarray(packed["scale"], dtype=float)

    def rhs(self, y):
        n = self.n
        out = np.empty(2 * n)
        out[:n] = y[n:]
        if self.kind == 0:
            out[n:] = 0.0
        else:
            x = y[:n]
            v = y[n:]
            df = -2.0 * self.c * x / (1.0 + self.c * float(x @ x))
            out[n:] = -2.0 * float(df @ v) * v + float(v @ v) * df
        return out

    def psi(self, b, x):
        z = self.rot[b] @ (x - self.centers[b])
        q = float(np.sum(z * z * self.inv_a2[b]))
        return self.scale[b] * (math.sqrt(q) - 1.0)

    def dpsi(self, b, x, v):
        z = self.rot[b] @ (x - self.centers[b])
        q = float(np.sum(z * z * self.inv_a2[b]))
        if q <= 0.0:
            return 0.0
        w = z * self.inv_a2[b]
        return self.scale[b] / math.sqrt(q) * float(w @ (self.rot[b] @ v))


def advance(system, y0, t_max, skip, hmax=math.inf, h0=0.05):
    """Integrate from ``y0`` until the first event or ``t_max``.

    ``skip`` is a boolean sequence over bodies; skipped bodies are ignored
    until they are safely on the far side of their zero set again.  Returns
    ``(code, body, t, y, h)`` where ``h`` is a suggested next step.
    """
    n = system.n
    f = system.rhs
    nb = len(skip)
    skip = list(skip)
    y = np.array(y0, dtype=float)
    tau = 0.0
    h = min(h0, hmax)
    k1 = f(y)
    while True:
        remaining = t_max - tau
        if remaining <= 0.0:
            return CUTOFF, -1, tau, y, h
        hs = min(h, hmax, remaining)
        y_new, err_vec, k7 = dopri_step(f, y, hs, k1)
        scale = ATOL + RTOL * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if not math.isfinite(err) or err > 1.0:
            h = hs * (max(0.2, SAFETY * err ** -0.2) if math.isfinite(err) else 0.2)
            if h < MIN_STEP:
                raise StepSizeError("event kernel step underflow")
            continue

        def x_at(s, _y=y, _k1=k1, _hs=hs, _ynew=y_new):
            if s == _hs:
                return _ynew
            if s == 0.0:
                return _y
            return dopri_step(f, _y, s, _k1)[0]

        best_t = math.inf
        best_b = -1
        best_code = CUTOFF
        xe = y_new[:n]
        ve = y_new[n:]
        for b in range(nb):
            if skip[b]:
                continue
            fe = system.psi(b, xe)
            if b == 0:
                if fe >= 0.0:
                    f0 = system.psi(0, y[:n])
                    s = illinois(lambda s: system.psi(0, x_at(s)[:n]), 0.0, f0, hs, fe)
                    if s < best_t:
                        best_t, best_b, best_code = s, 0, EXIT
                continue
            if fe <= 0.0:
                f0 = system.psi(b, y[:n])
                s = illinois(lambda s, b=b: system.psi(b, x_at(s)[:n]), 0.0, f0, hs, fe)
                if s < best_t:
                    best_t, best_b, best_code = s, b, CROSS
                continue
            d0 = system.dpsi(b, y[:n], y[n:])
            if d0 >= 0.0:
                continue
            d1 = system.dpsi(b, xe, ve)
            if d1 <= 0.0:
                continue

            def D(s, b=b):
                z = x_at(s)
                return system.dpsi(b, z[:n], z[n:])

            tm = illinois(D, 0.0, d0, hs, d1)
            fm = system.psi(b, x_at(tm)[:n])
            if abs(fm) <= TOUCH_TOL:
                if tm < best_t:
                    best_t, best_b, best_code = tm, b, TOUCH
            elif fm < 0.0:
                f0 = system.psi(b, y[:n])
                s = illinois(lambda s, b=b: system.psi(b, x_at(s)[:n]), 0.0, f0, tm, fm)
                if s < best_t:
                    best_t, best_b, best_code = s, b, CROSS
        if best_b >= 0:
            return best_code, best_b, tau + best_t, x_at(best_t), step_factor(err) * hs

        for b in range(nb):
            if skip[b]:
                fe = system.psi(b, xe)
                if (b == 0 and fe < 0.0) or (b > 0 and fe > 0.0):
                    skip[b] = False
        tau += hs
        y = y_new
        k1 = k7
        h = hs * step_factor(err)
