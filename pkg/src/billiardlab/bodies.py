"""Implicit strictly convex bodies.

Every body exposes ``psi`` (negative inside, zero on the boundary, positive
outside), its coordinate gradient and Hessian, and a way to walk its
boundary by direction from an interior reference point.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateBoundaryError


def rotation_2d(angle):
    c, s = math.cos(angle), math.sin(angle)
    # maps world offsets to body axes
    return np.array([[c, s], [-s, c]])


def unit_direction(params):
    """Unit vector for an angle (2D) or (polar, azimuth) pair (3D)."""
    params = np.atleast_1d(np.asarray(params, dtype=float))
    if params.size == 1:
        return np.array([math.cos(params[0]), math.sin(params[0])])
    th, ph = params
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def direction_params(u):
    u = np.asarray(u, dtype=float)
    if u.size == 2:
        return np.array([math.atan2(u[1], u[0])])
    r = float(np.linalg.norm(u))
    return np.array([math.acos(max(-1.0, min(1.0, u[2] / r))), math.atan2(u[1], u[0])])


class ImplicitBody:
    """Base class; subclasses provide ``psi``, ``grad`` and ``hess``."""

    shape = "implicit"
    label = 0

    def __init__(self, center, label=0):
        self.center = np.asarray(center, dtype=float)
        self.dim = self.center.size
        self.label = label

    def psi(self, x):
        raise NotImplementedError

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        h = max(1e-6, 1e-6 * float(np.linalg.norm(x)))
        out = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out[i] = (self.psi(x + e) - self.psi(x - e)) / (2 * h)
        return out

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        h = max(1e-4, 1e-4 * float(np.linalg.norm(x)))
        out = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out[i] = (self.grad(x + e) - self.grad(x - e)) / (2 * h)
        return 0.5 * (out + out.T)

    def pack(self):
        """Ellipsoid parameters for the compiled kernel, or ``None``."""
        return None

    # -- boundary walking ----------------------------------------------
    def radial_point(self, u):
        """Boundary point on the ray from ``center`` in direction ``u``."""
        u = np.asarray(u, dtype=float)
        u = u / np.linalg.norm(u)
        f = lambda r: self.psi(self.center + r * u)  # noqa: E731
        if f(0.0) >= 0:
            raise DegenerateBoundaryError("reference center is not interior")
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e8:
                raise DegenerateBoundaryError("body is unbounded along a ray")
        r = brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        return self.center + r * u

    def boundary_point(self, params):
        return self.radial_point(unit_direction(params))

    def params_of(self, x):
        return direction_params(np.asarray(x, dtype=float) - self.center)

    def project(self, x, iters=8):
        """Newton projection of a nearby point onto the zero set."""
        x = np.array(x, dtype=float)
        for _ in range(iters):
            g = self.grad(x)
            gg = float(g @ g)
            if gg < 1e-24:
                raise DegenerateBoundaryError("vanishing gradient during projection")
            p = self.psi(x)
            x = x - p * g / gg
            if abs(p) < 1e-15:
                break
        return x

    def sample_directions(self, count, rng=None):
        """Evenly spread (or random, if ``rng`` given) boundary parameters."""
        if self.dim == 2:
            if rng is None:
                th = 2 * math.pi * (np.arange(count) + 0.5) / count
            else:
                th = rng.uniform(0, 2 * math.pi, count)
            return th[:, None]
        if rng is None:
            k = np.arange(count) + 0.5
            th = np.arccos(1 - 2 * k / count)
            ph = math.pi * (1 + 5 ** 0.5) * k
        else:
            th = np.arccos(rng.uniform(-1, 1, count))
            ph = rng.uniform(0, 2 * math.pi, count)
        return np.column_stack([th, np.mod(ph, 2 * math.pi)])

    def sample_boundary(self, count, rng=None):
        return np.array([self.boundary_point(p) for p in self.sample_directions(count, rng)])


class Ellipsoid(ImplicitBody):
    """``psi = scale * (sqrt(q) - 1)`` with ``q = |R(x - c) / a|^2``.

    ``scale`` is the smallest semi-axis, so a ball of radius r has
    ``psi = |x - c| - r`` exactly.
    """

    shape = "ellipsoid"

    def __init__(self, center, axes, rotation=None, label=0):
        super().__init__(center, label)
        self.axes = np.asarray(axes, dtype=float)
        if self.axes.size != self.dim or np.any(self.axes <= 0):
            raise ValueError("axes must be positive, one per dimension")
        self.rotation = np.eye(self.dim) if rotation is None else np.asarray(rotation, dtype=float)
        self.scale = float(self.axes.min())
        self._inv_a2 = 1.0 / self.axes ** 2

    @property
    def is_ball(self):
        return bool(np.allclose(self.axes, self.axes[0], rtol=0, atol=0))

    def _local(self, x):
        y = self.rotation @ (np.asarray(x, dtype=float) - self.center)
        q = float(np.sum(y * y * self._inv_a2))
        return y, q

    def psi(self, x):
        _, q = self._local(x)
        return self.scale * (math.sqrt(q) - 1.0)

    def grad(self, x):
        y, q = self._local(x)
        if q <= 0.0:
            return np.zeros(self.dim)
        return (self.scale / math.sqrt(q)) * (self.rotation.T @ (y * self._inv_a2))

    def hess(self, x):
        y, q = self._local(x)
        if q <= 0.0:
            return np.zeros((self.dim, self.dim))
        rq = math.sqrt(q)
        w = self.rotation.T @ (y * self._inv_a2)
        A = self.rotation.T @ np.diag(self._inv_a2) @ self.rotation
        return self.scale * (A / rq - np.outer(w, w) / (q * rq))

    def pack(self):
        return dict(center=self.center, axes=self.axes, rotation=self.rotation, scale=self.scale)

    def boundary_point(self, params):
        u = unit_direction(params)
        return self.center + self.rotation.T @ (self.axes * u)

    def params_of(self, x):
        y = self.rotation @ (np.asarray(x, dtype=float) - self.center)
        return direction_params(y / self.axes)


def disc(center, radius, label=0):
    return Ellipsoid(center, [radius, radius], label=label)


def ball(center, radius, label=0):
    c = np.asarray(center, dtype=float)
    return Ellipsoid(c, np.full(c.size, float(radius)), label=label)


def ellipse(center, axes, angle=0.0, label=0):
    return Ellipsoid(center, axes, rotation_2d(angle), label=label)


class ImplicitPolynomial(ImplicitBody):
    """``psi(x) = sum_k coef_k * prod_i (x_i - center_i)^(e_ki)``.

    The caller is responsible for the sign convention (negative inside) and
    for convexity; both are checked when a scene is assembled.
    """

    shape = "implicit-polynomial"

    def __init__(self, terms, center, label=0):
        super().__init__(center, label)
        self.coef = np.array([float(t[0]) for t in terms])
        self.exps = np.array([list(t[1]) for t in terms], dtype=int)
        if self.exps.shape[1] != self.dim:
            raise ValueError("exponent vectors must match the dimension")
        if np.any(self.exps < 0):
            raise ValueError("exponents must be non-negative")

    def _pows(self, z, k):
        # z^(e - k) with zero where e < k, times falling factorial e(e-1)..
        e = self.exps
        fac = np.ones_like(e, dtype=float)
        for j in range(k):
            fac = fac * (e - j)
        p = np.where(e >= k, np.power(z[None, :], np.maximum(e - k, 0)), 0.0)
        return fac * p

    def psi(self, x):
        z = np.asarray(x, dtype=float) - self.center
        return float(self.coef @ np.prod(np.power(z[None, :], self.exps), axis=1))

    def grad(self, x):
        z = np.asarray(x, dtype=float) - self.center
        p0 = np.power(z[None, :], self.exps)
        p1 = self._pows(z, 1)
        out = np.empty(self.dim)
        for i in range(self.dim):
            m = p0.copy()
            m[:, i] = p1[:, i]
            out[i] = self.coef @ np.prod(m, axis=1)
        return out

    def hess(self, x):
        z = np.asarray(x, dtype=float) - self.center
        p0 = np.power(z[None, :], self.exps)
        p1 = self._pows(z, 1)
        p2 = self._pows(z, 2)
        out = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                m = p0.copy()
                if i == j:
                    m[:, i] = p2[:, i]
                else:
                    m[:, i] = p1[:, i]
                    m[:, j] = p1[:, j]
                out[i, j] = self.coef @ np.prod(m, axis=1)
        return out


class FunctionBody(ImplicitBody):
    """Body from an arbitrary callable; derivatives by finite differences."""

    shape = "function"

    def __init__(self, psi, center, label=0):
        super().__init__(center, label)
        self._psi = psi

    def psi(self, x):
        return float(self._psi(np.asarray(x, dtype=float)))


def outward_normal(chart, body, x):
    """Unit outward normal ``g^{-1} grad psi / |grad psi|`` and the gradient norm."""
    dpsi = body.grad(x)
    w = chart.ginv(x) @ dpsi
    nrm = math.sqrt(max(float(dpsi @ w), 0.0))
    if nrm < 1e-10:
        raise DegenerateBoundaryError("gradient vanishes at boundary point")
    return w / nrm, nrm
