"""Dormand-Prince 5(4) stepping shared by every pure-Python integration path."""

import math

import numpy as np

from .errors import StepSizeError

C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B = A[6]
# fifth-order minus embedded fourth-order weights
E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
MIN_STEP = 1e-14


def dopri_step(f, y, h, k1=None):
    """One Dormand-Prince step of size ``h``.

    Returns ``(y_new, err_vec, k7)``; ``k7`` is f(y_new) and can seed the
    next step (first-same-as-last).
    """
    if k1 is None:
        k1 = f(y)
    ks = [k1]
    for i in range(1, 6):
        yi = y.copy()
        for j, a in enumerate(A[i]):
            if a != 0.0:
                yi += (h * a) * ks[j]
        ks.append(f(yi))
    y_new = y.copy()
    for j, b in enumerate(B):
        if b != 0.0:
            y_new += (h * b) * ks[j]
    k7 = f(y_new)
    ks.append(k7)
    err = np.zeros_like(y)
    for j, e in enumerate(E):
        if e != 0.0:
            err += (h * e) * ks[j]
    return y_new, err, k7


def error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def step_factor(err):
    if err == 0.0:
        return MAX_FACTOR
    return min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -0.2))


def integrate(f, y0, t, *, rtol=1e-10, atol=1e-10, h0=0.01, hmax=math.inf,
              post_step=None, check=None, observer=None):
    """Integrate ``y' = f(y)`` from 0 to ``t`` with adaptive DOP5 steps.

    ``post_step(y)`` may return a corrected state (used for symmetrising
    matrix ODEs); ``check(tau, y)`` may raise to abort; ``observer(tau, y)``
    is called after every accepted step.  ``atol`` may be a callable
    returning per-component tolerances for the current state.  Returns
    ``(y, h_last)``.
    """
    y = np.array(y0, dtype=float)
    if t <= 0.0:
        return y, h0
    tau = 0.0
    h = min(h0, hmax, t)
    k1 = f(y)
    while tau < t:
        hs = min(h, hmax, t - tau)
        y_new, err_vec, k7 = dopri_step(f, y, hs, k1)
        err = error_norm(err_vec, y, y_new, rtol, atol(y) if callable(atol) else atol)
        if not np.isfinite(err):
            err = math.inf
        if err > 1.0:
            h = hs * max(MIN_FACTOR, SAFETY * err ** -0.2) if np.isfinite(err) else hs * MIN_FACTOR
            if h < MIN_STEP:
                raise StepSizeError(f"step size underflow at tau={tau:.6g}")
            continue
        tau = t if hs >= t - tau else tau + hs
        if post_step is not None:
            y_new = post_step(y_new)
            k7 = f(y_new)
        if check is not None:
            check(tau, y_new)
        y = y_new
        k1 = k7
        if observer is not None:
            observer(tau, y)
        h = hs * step_factor(err)
    return y, h
