"""Coordinate-patch Riemannian geometry.

A :class:`MetricChart` bundles a metric on one coordinate patch together with
its Levi-Civita connection and curvature tensor.  Three kinds exist:

* ``flat-cartesian``: the Euclidean metric, all Christoffel symbols zero;
* ``constant-curvature``: the conformal model ``g = lam(x)^2 * I`` with
  ``lam = 2 / (1 + c|x|^2)`` (Poincare ball for ``c < 0``, stereographic
  sphere for ``c > 0``), everything in closed form;
* ``numeric-from-metric``: any callable metric, connection and curvature by
  central differences.

Geodesic states are packed as ``y = [x, v]`` of length ``2n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _ode
from .errors import (DegenerateMetricError, DomainExitError,
                     IllConditionedPlaneError)

FLAT = "flat-cartesian"
CONSTANT = "constant-curvature"
NUMERIC = "numeric-from-metric"


def _fd_step(x, scale=1e-5):
    return max(scale, scale * float(np.linalg.norm(x)))


def _check_spd(g, x):
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DegenerateMetricError(f"metric not positive definite at {np.asarray(x).tolist()}") from None


def christoffel_from_metric(chart, x):
    """Levi-Civita symbols ``G[k, i, j]`` from central differences of ``chart.g``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    g0 = np.asarray(chart.g(x), dtype=float)
    _check_spd(g0, x)
    h = _fd_step(x)
    dg = np.empty((n, n, n))  # dg[m, i, j] = d_m g_ij
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        dg[m] = (np.asarray(chart.g(x + e)) - np.asarray(chart.g(x - e))) / (2 * h)
    ginv = np.linalg.inv(g0)
    # lower[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    lower = 0.5 * (np.transpose(dg, (2, 0, 1)) + np.transpose(dg, (1, 2, 0)) - dg)
    gam = np.einsum("kl,lij->kij", ginv, lower)
    return 0.5 * (gam + np.transpose(gam, (0, 2, 1)))


def riemann_from_gamma(gamma_fn, x):
    """Components ``R[l, i, j, k]`` with ``R(d_i, d_j) d_k = R[l, i, j, k] d_l``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = _fd_step(x, 1e-4)
    G = gamma_fn(x)
    dG = np.empty((n, n, n, n))  # dG[i, l, j, k] = d_i G^l_jk
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dG[i] = (gamma_fn(x + e) - gamma_fn(x - e)) / (2 * h)
    R = np.einsum("iljk->lijk", dG) - np.einsum("jlik->lijk", dG)
    R += np.einsum("lim,mjk->lijk", G, G) - np.einsum("ljm,mik->lijk", G, G)
    return R


class MetricChart:
    """A Riemannian metric on a single coordinate patch (immutable)."""

    def __init__(self, kind, dim, *, c=0.0, metric=None, domain=None, name=None):
        if dim < 2:
            raise ValueError("dimension must be at least 2")
        self.kind = kind
        self.dim = int(dim)
        self.c = float(c)
        self._metric = metric
        self._domain = domain
        self.name = name or kind

    def __repr__(self):
        if self.kind == CONSTANT:
            return f"MetricChart({self.kind}, dim={self.dim}, c={self.c:g})"
        return f"MetricChart({self.kind}, dim={self.dim})"

    @property
    def analytic(self):
        return self.kind != NUMERIC

    @property
    def sec_max(self) -> Optional[float]:
        """Sectional curvature bound when known in closed form, else ``None``."""
        if self.kind == FLAT:
            return 0.0
        if self.kind == CONSTANT:
            return self.c
        return None

    # -- metric ---------------------------------------------------------
    def conformal_factor(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == FLAT:
            return 1.0
        if self.kind == CONSTANT:
            return 2.0 / (1.0 + self.c * float(x @ x))
        raise TypeError("numeric charts have no conformal factor")

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == NUMERIC:
            return np.asarray(self._metric(x), dtype=float)
        lam = self.conformal_factor(x)
        return lam * lam * np.eye(self.dim)

    def ginv(self, x):
        if self.kind == NUMERIC:
            return np.linalg.inv(self.g(x))
        lam = self.conformal_factor(x)
        return np.eye(self.dim) / (lam * lam)

    def inner(self, x, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        if self.kind == FLAT:
            return float(u @ w)
        if self.kind == CONSTANT:
            lam = self.conformal_factor(x)
            return lam * lam * float(u @ w)
        return float(u @ self.g(x) @ w)

    def norm(self, x, u):
        return math.sqrt(max(self.inner(x, u, u), 0.0))

    def normalize(self, x, u):
        u = np.asarray(u, dtype=float)
        return u / self.norm(x, u)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            return False
        if self.kind == CONSTANT and self.c < 0:
            return float(x @ x) * (-self.c) < 1.0
        if self._domain is not None:
            return bool(self._domain(x))
        return True

    # -- connection -----------------------------------------------------
    def grad_log_factor(self, x):
        x = np.asarray(x, dtype=float)
        return -2.0 * self.c * x / (1.0 + self.c * float(x @ x))

    def gamma(self, x):
        """Christoffel symbols ``G[k, i, j] = Gamma^k_ij``."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        if self.kind == FLAT:
            return np.zeros((n, n, n))
        if self.kind == CONSTANT:
            df = self.grad_log_factor(x)
            eye = np.eye(n)
            # d_ik df_j + d_jk df_i - d_ij df_k
            G = (np.einsum("ik,j->kij", eye, df) + np.einsum("jk,i->kij", eye, df)
                 - np.einsum("ij,k->kij", eye, df))
            return G
        return christoffel_from_metric(self, x)

    def connection(self, x, u, w):
        """``Gamma^k_ij u^i w^j``: the correction term of covariant derivatives."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        if self.kind == FLAT:
            return np.zeros(self.dim)
        if self.kind == CONSTANT:
            df = self.grad_log_factor(x)
            return u * float(df @ w) + w * float(df @ u) - df * float(u @ w)
        return np.einsum("kij,i,j->k", self.gamma(x), u, w)

    def geodesic_rhs(self, y):
        n = self.dim
        x = y[:n]
        v = y[n:2 * n]
        out = np.empty(2 * n)
        out[:n] = v
        if self.kind == FLAT:
            out[n:] = 0.0
        elif self.kind == CONSTANT:
            df = -2.0 * self.c * x / (1.0 + self.c * float(x @ x))
            out[n:] = -2.0 * float(df @ v) * v + float(v @ v) * df
        else:
            out[n:] = -np.einsum("kij,i,j->k", self.gamma(x), v, v)
        return out

    # -- curvature ------------------------------------------------------
    def riemann(self, x):
        """Full tensor ``R[l, i, j, k]`` (see :func:`riemann_from_gamma`)."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        if self.kind == FLAT:
            return np.zeros((n, n, n, n))
        if self.kind == CONSTANT:
            # R^l_ijk = c (d^l_i g_jk - d^l_j g_ik)
            g = self.g(x)
            eye = np.eye(n)
            return self.c * (np.einsum("li,jk->lijk", eye, g) - np.einsum("lj,ik->lijk", eye, g))
        return riemann_from_gamma(self.gamma, x)

    def riem(self, x, X, Y, Z, W):
        """``<R(X, Y) Z, W>``."""
        X, Y, Z, W = (np.asarray(a, dtype=float) for a in (X, Y, Z, W))
        if self.kind == FLAT:
            return 0.0
        if self.kind == CONSTANT:
            ip = lambda a, b: self.inner(x, a, b)  # noqa: E731
            return self.c * (ip(Y, Z) * ip(X, W) - ip(X, Z) * ip(Y, W))
        RXYZ = np.einsum("lijk,i,j,k->l", self.riemann(x), X, Y, Z)
        return self.inner(x, RXYZ, W)

    def curvature_operator(self, x, N, frame):
        """Matrix ``<R(N, e_i) N, e_j>`` over the rows of ``frame``."""
        m = len(frame)
        if self.kind == FLAT:
            return np.zeros((m, m))
        if self.kind == CONSTANT:
            # with N unit and e_i orthonormal and normal to N this is -c I;
            # evaluated generally to tolerate slightly drifted frames
            nn = self.inner(x, N, N)
            out = np.empty((m, m))
            for i in range(m):
                for j in range(m):
                    out[i, j] = self.c * (self.inner(x, frame[i], N) * self.inner(x, N, frame[j])
                                          - nn * self.inner(x, frame[i], frame[j]))
            return out
        R = self.riemann(x)
        g = self.g(x)
        E = np.asarray(frame, dtype=float)
        out = np.empty((m, m))
        for i in range(m):
            RN = np.einsum("lijk,i,j,k->l", R, N, E[i], N)
            out[i] = E @ (g @ RN)
        return 0.5 * (out + out.T)

    def distance(self, p, q):
        """Geodesic distance (closed form on model charts).

        Numeric charts return the length of the straight coordinate segment,
        which is an upper bound.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == FLAT:
            return float(np.linalg.norm(p - q))
        if self.kind == CONSTANT:
            c = self.c
            if c == 0.0:
                return 2.0 * float(np.linalg.norm(p - q))
            if c < 0:
                k = math.sqrt(-c)
                u, w = k * p, k * q
                arg = 1.0 + 2.0 * float((u - w) @ (u - w)) / ((1.0 - u @ u) * (1.0 - w @ w))
                return math.acosh(max(arg, 1.0)) / k
            k = math.sqrt(c)
            u, w = k * p, k * q
            chord = 2.0 * float(np.linalg.norm(u - w)) / math.sqrt((1.0 + u @ u) * (1.0 + w @ w))
            return 2.0 * math.asin(min(chord / 2.0, 1.0)) / k
        nodes, weights = np.polynomial.legendre.leggauss(16)
        d = q - p
        total = 0.0
        for s, w in zip(nodes, weights):
            total += 0.5 * w * self.norm(p + 0.5 * (s + 1.0) * d, d)
        return total


def flat_chart(dim=2):
    return MetricChart(FLAT, dim)


def constant_curvature_chart(c, dim=2):
    """Conformal model of curvature ``c``; ``c = 0`` is twice-scaled flat space."""
    return MetricChart(CONSTANT, dim, c=c)


def numeric_chart(metric: Callable, dim, domain: Optional[Callable] = None, name=None):
    return MetricChart(NUMERIC, dim, metric=metric, domain=domain, name=name)


def sectional_curvature(chart, x, X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    xx = chart.inner(x, X, X)
    yy = chart.inner(x, Y, Y)
    xy = chart.inner(x, X, Y)
    den = xx * yy - xy * xy
    if den <= 1e-12 * xx * yy:
        raise IllConditionedPlaneError("vectors span a degenerate plane")
    return chart.riem(x, X, Y, Y, X) / den


# ---------------------------------------------------------------------------
# states, frames, integration

@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    @property
    def state(self):
        return np.concatenate([self.x, self.v])

    @classmethod
    def from_state(cls, y, n=None):
        n = len(y) // 2 if n is None else n
        return cls(np.array(y[:n]), np.array(y[n:2 * n]))

    @classmethod
    def unit(cls, chart, x, v):
        """Build a phase point, rescaling ``v`` to unit g-norm."""
        return cls(x, chart.normalize(x, v))

    def reversed(self):
        return PhasePoint(self.x, -self.v)


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-10
    atol: float = 1e-10
    h0: float = 0.01
    hmax: float = math.inf


@dataclass(frozen=True)
class Frame:
    """Orthonormal basis (rows of ``e``) of the complement of ``base.v``."""

    base: PhasePoint
    e: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "e", np.atleast_2d(np.asarray(self.e, dtype=float)))

    def gram(self, chart):
        vecs = np.vstack([self.base.v, self.e])
        x = self.base.x
        return np.array([[chart.inner(x, a, b) for b in vecs] for a in vecs])


def gram_schmidt(chart, x, vectors):
    out = []
    for w in vectors:
        w = np.array(w, dtype=float)
        for u in out:
            w = w - chart.inner(x, w, u) * u
        nw = chart.norm(x, w)
        if nw < 1e-12:
            raise DegenerateMetricError("linearly dependent vectors in Gram-Schmidt")
        out.append(w / nw)
    return np.array(out)


def complement_frame(chart, x, v):
    """g-orthonormal basis of the g-orthogonal complement of ``v``."""
    x = np.asarray(x, dtype=float)
    n = chart.dim
    vu = chart.normalize(x, v)
    basis = [vu]
    # pick coordinate axes in order of least alignment with v
    g = chart.g(x)
    align = np.abs(g @ vu) / np.sqrt(np.diag(g))
    for k in np.argsort(align):
        if len(basis) == n:
            break
        w = np.zeros(n)
        w[k] = 1.0
        for u in basis:
            w = w - chart.inner(x, w, u) * u
        nw = chart.norm(x, w)
        if nw > 1e-8:
            basis.append(w / nw)
    return np.array(basis[1:])


def default_frame(chart, p: PhasePoint):
    return Frame(p, complement_frame(chart, p.x, p.v))


@dataclass(frozen=True)
class GeodesicSegment:
    chart: MetricChart
    start: PhasePoint
    t: float
    step_control: StepControl = StepControl()

    def end(self):
        return integrate_geodesic(self.chart, self.start, self.t, self.step_control)


def _domain_guard(chart, n, last):
    def check(tau, y):
        if not chart.contains(y[:n]):
            st = last.get("y")
            raise DomainExitError("geodesic left the chart domain",
                                  state=None if st is None else PhasePoint.from_state(st, n),
                                  t=last.get("t"))
    return check


def metric_atol(chart, atol):
    """Absolute tolerance measured in the metric for conformal charts.

    Coordinate tolerances are divided by the conformal factor so that
    accuracy does not degrade where coordinate speeds become tiny (near the
    ideal boundary of the Poincare ball).
    """
    if chart.kind != CONSTANT:
        return atol
    n = chart.dim

    def fn(y):
        lam = chart.conformal_factor(y[:n])
        return atol / max(1.0, lam)

    return fn


def integrate_geodesic(chart, start: PhasePoint, t, step_control: StepControl = StepControl(),
                       renormalize=False, observer=None):
    """Flow ``start`` along the geodesic for time ``t >= 0``.

    The velocity is never rescaled during integration; ``renormalize=True``
    rescales the reported velocity only.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    n = chart.dim
    last = {"y": start.state, "t": 0.0}

    def obs(tau, y):
        last["y"] = y
        last["t"] = tau
        if observer is not None:
            observer(tau, y)

    y, _ = _ode.integrate(chart.geodesic_rhs, start.state, float(t), rtol=step_control.rtol,
                          atol=metric_atol(chart, step_control.atol), h0=step_control.h0, hmax=step_control.hmax,
                          check=_domain_guard(chart, n, last), observer=obs)
    out = PhasePoint.from_state(y, n)
    if renormalize:
        out = PhasePoint(out.x, chart.normalize(out.x, out.v))
    return out


def transport_rhs(chart, m):
    """Right-hand side for a geodesic carrying ``m`` parallel vectors."""
    n = chart.dim

    def f(y):
        x = y[:n]
        v = y[n:2 * n]
        out = np.empty_like(y)
        out[:2 * n] = chart.geodesic_rhs(y[:2 * n])
        if chart.kind == FLAT:
            out[2 * n:] = 0.0
            return out
        if chart.kind == NUMERIC:
            G = chart.gamma(x)
            for a in range(m):
                w = y[2 * n + a * n:2 * n + (a + 1) * n]
                out[2 * n + a * n:2 * n + (a + 1) * n] = -np.einsum("kij,i,j->k", G, v, w)
            return out
        for a in range(m):
            w = y[2 * n + a * n:2 * n + (a + 1) * n]
            out[2 * n + a * n:2 * n + (a + 1) * n] = -chart.connection(x, v, w)
        return out

    return f


def transport_vectors(chart, start: PhasePoint, vectors, t, step_control=StepControl()):
    """Parallel-transport ``vectors`` along the geodesic from ``start`` for time ``t``.

    Returns ``(end_point, transported)``.
    """
    n = chart.dim
    vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
    m = vecs.shape[0] if vecs.size else 0
    y0 = np.concatenate([start.state, vecs.ravel()])
    last = {"y": start.state, "t": 0.0}

    def obs(tau, y):
        last["y"] = y[:2 * n]
        last["t"] = tau

    y, _ = _ode.integrate(transport_rhs(chart, m), y0, float(t), rtol=step_control.rtol,
                          atol=step_control.atol, h0=step_control.h0, hmax=step_control.hmax,
                          check=_domain_guard(chart, n, last), observer=obs)
    return PhasePoint.from_state(y[:2 * n], n), y[2 * n:].reshape(m, n)


def parallel_transport(chart, along: GeodesicSegment, f: Frame) -> Frame:
    end, e = transport_vectors(chart, along.start, f.e, along.t, along.step_control)
    return Frame(end, e)
