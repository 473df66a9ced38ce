"""Scenes: an exterior body S, strictly convex obstacles, derived constants."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize

from . import bodies as _bodies
from .bodies import Ellipsoid, ImplicitBody, outward_normal
from .errors import (DegenerateBoundaryError, NotOnBoundaryError,
                     PartialConstantsError, SceneError)
from .geometry import CONSTANT, FLAT, MetricChart, complement_frame, sectional_curvature

COND1 = "Cond1"
COND2 = "Cond2"
NEITHER = "Neither"


def boundary_shape_operator(body, chart, x, tol=1e-9):
    """Shape operator of ``∂body`` at ``x`` and the tangent frame it is written in.

    ``s(Y) = ∇_Y N_out``; positive definite for a strictly convex body.
    Returns ``(s, frame)`` with ``frame`` an ``(n-1, n)`` array of
    g-orthonormal tangent vectors.
    """
    x = np.asarray(x, dtype=float)
    p = body.psi(x)
    if abs(p) > tol:
        raise NotOnBoundaryError(f"point is off the boundary (psi = {p:.3e})")
    dpsi = body.grad(x)
    if float(np.linalg.norm(dpsi)) < 1e-10:
        raise DegenerateBoundaryError("vanishing gradient on the boundary")
    n_out, gnorm = outward_normal(chart, body, x)
    H = body.hess(x) - np.einsum("kij,k->ij", chart.gamma(x), dpsi)
    frame = complement_frame(chart, x, n_out)
    s = frame @ H @ frame.T / gnorm
    return 0.5 * (s + s.T), frame


@dataclass(frozen=True)
class EstimationBudget:
    boundary_samples: int = 256
    rays: int = 2000
    fronts: int = 200
    max_attempts_factor: int = 40
    seed: int = 20240611
    cond2_variant: bool = False
    phi0_margin: float = 0.05
    theta0_factor: float = 0.9


@dataclass(frozen=True)
class SceneConstants:
    d_min: float
    D: float
    sec_max: float
    kappa_min: float
    xi: Optional[int]
    phi0: Optional[float]
    theta0: Optional[float]
    theta: Optional[float]
    condition: str
    cond2: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    warnings: tuple = ()

    def as_dict(self):
        return {
            "d_min": self.d_min, "D": self.D, "sec_max": self.sec_max,
            "kappa_min": self.kappa_min, "xi": self.xi, "phi0": self.phi0,
            "theta0": self.theta0, "theta": self.theta, "condition": self.condition,
            "cond2": dict(self.cond2), "provenance": dict(self.provenance),
            "warnings": list(self.warnings),
        }


def xi_from(D, d_min):
    if not math.isfinite(d_min):
        return None
    return int(math.ceil(D / d_min)) + 2


def theta_from(kappa_min, phi0, theta0):
    if phi0 is None or theta0 is None:
        return None
    return min(2.0 * kappa_min * math.cos(phi0), theta0)


def evaluate_condition(sec_max, D, xi, theta):
    """Curvature-condition verdict plus both readings of the second condition."""
    info = {}
    if sec_max <= 0:
        return COND1, {"reason": "sec_max <= 0"}
    if xi is None or theta is None:
        return NEITHER, {"reason": "xi or theta undefined"}
    rs = math.sqrt(sec_max)
    info["bound"] = D * xi * rs
    info["bound_ok"] = info["bound"] < math.pi / 2
    info["verbatim_lhs"] = math.tan(sec_max * D * xi) * rs
    info["variant_lhs"] = math.tan(rs * D * xi) * rs
    info["theta"] = theta
    info["verbatim_ok"] = info["bound_ok"] and info["verbatim_lhs"] < theta
    info["variant_ok"] = info["bound_ok"] and info["variant_lhs"] < theta
    return None, info


class BoundaryParam:
    """Intrinsic parameters on ``∂S``.

    In 2D the parameter is g-arc length from the point at body angle 0,
    counter-clockwise.  In 3D it is the (polar, azimuth) pair of the body's
    own direction parameterisation.
    """

    def __init__(self, chart, body, intervals=512, nodes=10):
        self.chart = chart
        self.body = body
        self.dim = chart.dim
        if self.dim != 2:
            return
        self._gl = np.polynomial.legendre.leggauss(nodes)
        self._closed = None
        if isinstance(body, Ellipsoid) and body.is_ball:
            r = float(body.axes[0])
            if chart.kind == FLAT:
                self._closed = r
            elif chart.kind == CONSTANT and float(np.linalg.norm(body.center)) == 0.0:
                self._closed = chart.conformal_factor(np.array([r, 0.0])) * r
        if self._closed is not None:
            self.length = 2 * math.pi * self._closed
            return
        self._t = np.linspace(0.0, 2 * math.pi, intervals + 1)
        seg = np.array([self._seg(a, b) for a, b in zip(self._t[:-1], self._t[1:])])
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self._cum[-1])

    def _speed(self, t):
        b = self.body
        if isinstance(b, Ellipsoid):
            dx = b.rotation.T @ (b.axes * np.array([-math.sin(t), math.cos(t)]))
            x = b.boundary_point([t])
        else:
            u = np.array([math.cos(t), math.sin(t)])
            du = np.array([-math.sin(t), math.cos(t)])
            x = b.radial_point(u)
            r = float(np.linalg.norm(x - b.center))
            gr = b.grad(x)
            dr = -r * float(gr @ du) / float(gr @ u)
            dx = dr * u + r * du
        return self.chart.norm(x, dx)

    def _seg(self, a, b):
        s, w = self._gl
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return half * sum(wi * self._speed(mid + half * si) for si, wi in zip(s, w))

    def _s_of_t(self, t):
        t = t % (2 * math.pi)
        if self._closed is not None:
            return self._closed * t
        i = min(int(np.searchsorted(self._t, t, side="right")) - 1, len(self._t) - 2)
        return float(self._cum[i]) + self._seg(self._t[i], t)

    def _t_of_s(self, s):
        s = s % self.length
        if self._closed is not None:
            return s / self._closed
        i = min(int(np.searchsorted(self._cum, s, side="right")) - 1, len(self._t) - 2)
        a, b = self._t[i], self._t[i + 1]
        if s <= self._cum[i]:
            return a
        return brentq(lambda t: self._s_of_t(t) - s, a, b, xtol=1e-15, rtol=1e-15)

    def point(self, params):
        params = np.atleast_1d(np.asarray(params, dtype=float))
        if self.dim == 2:
            return self.body.boundary_point([self._t_of_s(float(params[0]))])
        return self.body.boundary_point(params)

    def params(self, x):
        body_par = self.body.params_of(x)
        if self.dim == 2:
            return np.array([self._s_of_t(float(body_par[0]))])
        return body_par

    def parameter_names(self):
        if self.dim == 2:
            return ["s"]
        return ["theta", "phi"]


class Scene:
    """Exterior body ``S`` with obstacles ``K_1..K_d`` on one chart.

    Obstacles get labels ``1..d`` in the given order.  Invariants are
    checked at construction (``validate=False`` skips the sampling checks).
    """

    def __init__(self, chart: MetricChart, S: ImplicitBody, obstacles, name="scene",
                 estimation: Optional[EstimationBudget] = None, validate=True, source_hash=None):
        self.chart = chart
        self.S = S
        self.obstacles = list(obstacles)
        for i, k in enumerate(self.obstacles, start=1):
            k.label = i
        S.label = 0
        self.name = name
        self.estimation = estimation or EstimationBudget()
        self.source_hash = source_hash
        self._constants = None
        for b in [S] + self.obstacles:
            if b.dim != chart.dim:
                raise SceneError("body dimension does not match chart dimension", key="dim")
        self.boundary = BoundaryParam(chart, S)
        self.D = self._diameter()
        self.d_min = self._min_separation()
        if validate:
            self._validate()

    @property
    def dim(self):
        return self.chart.dim

    @property
    def d(self):
        return len(self.obstacles)

    @property
    def bodies(self):
        return [self.S] + self.obstacles

    def hmax(self):
        """Integrator step cap that keeps gaps between zero sets resolved."""
        if self.d >= 2 and math.isfinite(self.d_min):
            return self.d_min / 4.0
        return self.D / 4.0

    def packed(self):
        """Data for the compiled kernel, or ``None`` if the scene is not packable."""
        if self.chart.kind == FLAT:
            kind, c = 0, 0.0
        elif self.chart.kind == CONSTANT:
            kind, c = 1, self.chart.c
        else:
            return None
        if self.dim > 3:
            return None
        packs = [b.pack() for b in self.bodies]
        if any(p is None for p in packs):
            return None
        return dict(kind=kind, c=c, n=self.dim,
                    centers=np.array([p["center"] for p in packs]),
                    axes=np.array([p["axes"] for p in packs]),
                    rot=np.array([p["rotation"] for p in packs]),
                    scale=np.array([p["scale"] for p in packs]))

    def inward_normal(self, x):
        n_out, _ = outward_normal(self.chart, self.S, x)
        return -n_out

    def with_constants(self, constants):
        new = object.__new__(Scene)
        new.__dict__.update(self.__dict__)
        new._constants = constants
        return new

    def constants(self, estimation: Optional[EstimationBudget] = None):
        if self._constants is None or estimation is not None:
            c = compute_constants(self, estimation or self.estimation)
            if estimation is None:
                self._constants = c
            return c
        return self._constants

    def xi(self):
        return xi_from(self.D, self.d_min)

    # -- analytic/sampled geometry ---------------------------------------
    def _is_flat_ball(self, b):
        return self.chart.kind == FLAT and isinstance(b, Ellipsoid) and b.is_ball

    def _diameter(self):
        S = self.S
        if isinstance(S, Ellipsoid):
            if self.chart.kind == FLAT:
                self._D_method = "analytic"
                return 2.0 * float(S.axes.max())
            if (self.chart.kind == CONSTANT and S.is_ball
                    and float(np.linalg.norm(S.center)) == 0.0):
                self._D_method = "analytic"
                r = float(S.axes[0])
                e = np.zeros(self.dim)
                e[0] = r
                return 2.0 * self.chart.distance(np.zeros(self.dim), e)
        self._D_method = "sampled+ascent"
        pts = S.sample_boundary(64 if self.dim == 2 else 128)
        best, bi, bj = -1.0, 0, 0
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = self.chart.distance(pts[i], pts[j])
                if d > best:
                    best, bi, bj = d, i, j
        dirs = S.sample_directions(64 if self.dim == 2 else 128)
        x0 = np.concatenate([dirs[bi], dirs[bj]])
        k = dirs.shape[1]
        res = minimize(lambda z: -self.chart.distance(S.boundary_point(z[:k]), S.boundary_point(z[k:])),
                       x0, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-12, maxiter=4000))
        return max(best, -float(res.fun))

    def _pair_distance(self, a, b, samples=64):
        if self._is_flat_ball(a) and self._is_flat_ball(b):
            return float(np.linalg.norm(a.center - b.center) - a.axes[0] - b.axes[0]), "analytic"
        da = a.sample_directions(samples)
        db = b.sample_directions(samples)
        pa = np.array([a.boundary_point(p) for p in da])
        pb = np.array([b.boundary_point(p) for p in db])
        best, bi, bj = math.inf, 0, 0
        for i in range(len(pa)):
            for j in range(len(pb)):
                d = self.chart.distance(pa[i], pb[j])
                if d < best:
                    best, bi, bj = d, i, j
        k = da.shape[1]
        res = minimize(lambda z: self.chart.distance(a.boundary_point(z[:k]), b.boundary_point(z[k:])),
                       np.concatenate([da[bi], db[bj]]), method="Nelder-Mead",
                       options=dict(xatol=1e-11, fatol=1e-13, maxiter=4000))
        return min(best, float(res.fun)), "sampled+descent"

    def _min_separation(self):
        if self.d < 2:
            self._dmin_method = "undefined (d < 2)"
            return math.inf
        best = math.inf
        methods = set()
        for i in range(self.d):
            for j in range(i + 1, self.d):
                dist, how = self._pair_distance(self.obstacles[i], self.obstacles[j])
                methods.add(how)
                best = min(best, dist)
        self._dmin_method = "analytic" if methods == {"analytic"} else "sampled+descent"
        return best

    def _validate(self):
        chart = self.chart
        nsamp = 96 if self.dim == 2 else 200
        margin = 1e-3 * self.D
        for b in self.bodies:
            for x in b.sample_boundary(nsamp):
                if not chart.contains(x):
                    raise SceneError(f"body {b.label} leaves the chart domain", key="obstacles" if b.label else "S")
                try:
                    s, _ = boundary_shape_operator(b, chart, x, tol=1e-7)
                except (DegenerateBoundaryError, NotOnBoundaryError) as exc:
                    raise SceneError(f"body {b.label}: {exc}") from None
                if np.linalg.eigvalsh(s).min() <= 0:
                    raise SceneError(f"body {b.label} is not strictly convex near {np.round(x, 6).tolist()}")
        for k in self.obstacles:
            pts = k.sample_boundary(nsamp)
            if max(self.S.psi(x) for x in pts) >= 0:
                raise SceneError(f"obstacle {k.label} is not inside S", key="obstacles")
            if self.S.psi(k.center) >= 0:
                raise SceneError(f"obstacle {k.label} is not inside S", key="obstacles")
        if self.d >= 2:
            if not self.d_min > 0:
                raise SceneError("obstacles intersect (d_min <= 0)", key="obstacles")
            if self.d_min < margin:
                raise SceneError(f"obstacles closer than the separation margin {margin:.3g}",
                                 key="obstacles")
        for k in self.obstacles:
            for x in self.S.sample_boundary(nsamp):
                if k.psi(x) <= 0:
                    raise SceneError(f"obstacle {k.label} touches the boundary of S", key="obstacles")


# ---------------------------------------------------------------------------
# constants

def _kappa_min(scene, samples):
    chart = scene.chart
    if all(scene._is_flat_ball(k) for k in scene.obstacles):
        return min(1.0 / float(k.axes[0]) for k in scene.obstacles), "analytic"
    best = math.inf
    for k in scene.obstacles:
        dirs = k.sample_directions(samples)
        vals = []
        for p in dirs:
            s, _ = boundary_shape_operator(k, chart, k.boundary_point(p), tol=1e-7)
            vals.append(float(np.linalg.eigvalsh(s).min()))
        i = int(np.argmin(vals))

        def f(z, k=k):
            s, _ = boundary_shape_operator(k, chart, k.boundary_point(z), tol=1e-7)
            return float(np.linalg.eigvalsh(s).min())

        res = minimize(f, dirs[i], method="Nelder-Mead", options=dict(xatol=1e-9, fatol=1e-13))
        best = min(best, vals[i], float(res.fun))
    return best, "sampled+descent"


def kappa_min(scene, samples=None):
    """Lower bound on the obstacle principal curvatures (``inf`` when there are none)."""
    if scene.d == 0:
        return math.inf
    return _kappa_min(scene, samples or scene.estimation.boundary_samples)[0]


def _sec_max(scene, samples, rng):
    chart = scene.chart
    if chart.sec_max is not None:
        return chart.sec_max, "analytic"
    n = chart.dim
    best = -math.inf
    S = scene.S
    pts = []
    while len(pts) < samples:
        u = S.boundary_point(S.sample_directions(1, rng)[0])
        pts.append(S.center + rng.uniform(0, 1) ** (1.0 / n) * (u - S.center))
    for x in pts:
        for _ in range(1 if n == 2 else 3):
            X = rng.normal(size=n)
            Y = rng.normal(size=n)
            best = max(best, sectional_curvature(chart, x, X, Y))
    return best, "sampled"


def compute_constants(scene: Scene, estimation: Optional[EstimationBudget] = None) -> SceneConstants:
    """Global constants of a scene with per-field provenance."""
    from .billiard import estimate_phi0
    from .fronts import estimate_theta0

    est = estimation or scene.estimation
    rng = np.random.default_rng(est.seed)
    warn = []
    prov = {"D": scene._D_method, "d_min": scene._dmin_method}
    sec_max, prov["sec_max"] = _sec_max(scene, est.boundary_samples, rng)
    kappa_min, prov["kappa_min"] = _kappa_min(scene, est.boundary_samples)
    xi = xi_from(scene.D, scene.d_min)
    if scene.d < 2:
        warn.append("d < 2: d_min, xi, phi0 and theta undefined (the theory needs d >= 2)")
    missing = []
    phi0 = None
    if xi is not None:
        phi0_info = estimate_phi0(scene, xi, est)
        phi0 = phi0_info["phi0"]
        prov["phi0"] = (f"sampled: {phi0_info['rays_used']} rays with >= xi reflections "
                        f"out of {phi0_info['attempts']} attempts")
        if phi0 is None:
            missing.append("phi0")
    else:
        prov["phi0"] = "undefined"
    th0 = estimate_theta0(scene, est, kappa_min)
    theta0 = th0["theta0"]
    prov["theta0"] = f"sampled: {th0['fronts']} tangent fronts, eps policy, x{est.theta0_factor}"
    if theta0 is None:
        missing.append("theta0")
    theta = theta_from(kappa_min, phi0, theta0)
    cond, info = evaluate_condition(sec_max, scene.D, xi, theta)
    if cond is None:
        ok = info["variant_ok"] if est.cond2_variant else info["verbatim_ok"]
        cond = COND2 if ok else NEITHER
        if not ok:
            if not info["bound_ok"]:
                info["failing"] = "D*xi*sqrt(sec_max) < pi/2"
            else:
                info["failing"] = ("tan(sqrt(sec_max)*D*xi)*sqrt(sec_max) < theta" if est.cond2_variant
                                   else "tan(sec_max*D*xi)*sqrt(sec_max) < theta")
    info["reading"] = "variant" if est.cond2_variant else "verbatim"
    consts = SceneConstants(d_min=scene.d_min, D=scene.D, sec_max=sec_max, kappa_min=kappa_min,
                            xi=xi, phi0=phi0, theta0=theta0, theta=theta, condition=cond,
                            cond2=info, provenance=prov, warnings=tuple(warn))
    for w in warn:
        warnings.warn(w, stacklevel=2)
    if missing:
        raise PartialConstantsError("estimation budget exhausted", missing=missing, partial=consts)
    return consts


# ---------------------------------------------------------------------------
# general position

@dataclass
class GeneralPositionReport:
    passed: bool
    reason: str
    samples: int
    witness: Optional[tuple] = None
    components: tuple = ()


def _flat_ball_hits(scene, P, V):
    """Components hit by the lines ``P + t V`` (flat chart, ball obstacles)."""
    hits = []
    for k in scene.obstacles:
        w = k.center[None, :] - P
        along = np.einsum("ij,ij->i", w, V)
        perp2 = np.einsum("ij,ij->i", w, w) - along ** 2
        hits.append(perp2 <= float(k.axes[0]) ** 2 * (1 + 1e-12))
    return np.array(hits).T


def components_hit(scene, p, v):
    """Labels of obstacles met by the full smooth geodesic of S through (p, v)."""
    from .billiard import smooth_geodesic_samples

    chart = scene.chart
    if chart.kind == FLAT and all(isinstance(k, Ellipsoid) and k.is_ball for k in scene.obstacles):
        h = _flat_ball_hits(scene, np.asarray(p)[None, :], chart.normalize(p, v)[None, :])[0]
        return tuple(int(i) + 1 for i in np.flatnonzero(h))
    out = []
    pts = smooth_geodesic_samples(scene, p, v)
    for k in scene.obstacles:
        vals = np.array([k.psi(x) for x in pts])
        if vals.min() <= 1e-12:
            out.append(k.label)
    return tuple(out)


def _geodesic_through(chart, p, q):
    """Initial unit direction at ``p`` of a geodesic reaching ``q``."""
    from .geometry import PhasePoint, integrate_geodesic

    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    if chart.kind == FLAT:
        return d / np.linalg.norm(d)
    L = chart.distance(p, q)
    v0 = chart.normalize(p, d)
    n = chart.dim
    frame = complement_frame(chart, p, v0)

    def resid(z):
        v = v0 + frame.T @ z
        v = chart.normalize(p, v)
        return integrate_geodesic(chart, PhasePoint(p, v), L).x - q

    from scipy.optimize import least_squares
    sol = least_squares(resid, np.zeros(n - 1), xtol=1e-12, ftol=1e-12)
    v = chart.normalize(p, v0 + frame.T @ sol.x)
    return v


def check_general_position(scene: Scene, samples: int = 10000, seed: int = 0) -> GeneralPositionReport:
    """Statistical no-eclipse check over geodesics through pairs of obstacle points.

    Geodesics through pairs of obstacle centres are tried first, then random
    pairs of boundary points.
    """
    if scene.d <= 2:
        return GeneralPositionReport(True, "d <= 2", 0)
    rng = np.random.default_rng(seed)
    obs = scene.obstacles
    chart = scene.chart
    cand = []
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            cand.append((obs[i].center, obs[j].center))
    flat_balls = chart.kind == FLAT and all(isinstance(k, Ellipsoid) and k.is_ball for k in obs)
    pairs_i = rng.integers(0, len(obs), samples)
    pairs_j = (pairs_i + rng.integers(1, len(obs), samples)) % len(obs)
    P = np.empty((samples, scene.dim))
    Q = np.empty((samples, scene.dim))
    for idx in range(len(obs)):
        m = pairs_i == idx
        P[m] = obs[idx].sample_boundary(int(m.sum()), rng) if m.any() else P[m]
        m = pairs_j == idx
        Q[m] = obs[idx].sample_boundary(int(m.sum()), rng) if m.any() else Q[m]
    for p, q in cand:
        v = _geodesic_through(chart, p, q)
        hit = components_hit(scene, p, v)
        if len(hit) >= 3:
            return GeneralPositionReport(False, "geodesic meets >= 3 components", len(cand),
                                         witness=(np.asarray(p), v), components=hit)
    if flat_balls:
        V = Q - P
        V /= np.linalg.norm(V, axis=1)[:, None]
        H = _flat_ball_hits(scene, P, V)
        cnt = H.sum(axis=1)
        bad = np.flatnonzero(cnt >= 3)
        if bad.size:
            k = int(bad[0])
            return GeneralPositionReport(False, "geodesic meets >= 3 components", len(cand) + samples,
                                         witness=(P[k], V[k]), components=components_hit(scene, P[k], V[k]))
        return GeneralPositionReport(True, "no sampled geodesic meets >= 3 components", len(cand) + samples)
    for k in range(samples):
        v = _geodesic_through(chart, P[k], Q[k])
        hit = components_hit(scene, P[k], v)
        if len(hit) >= 3:
            return GeneralPositionReport(False, "geodesic meets >= 3 components", len(cand) + k + 1,
                                         witness=(P[k], v), components=hit)
    return GeneralPositionReport(True, "no sampled geodesic meets >= 3 components", len(cand) + samples)


__all__ = [
    "Scene", "SceneConstants", "EstimationBudget", "BoundaryParam", "boundary_shape_operator",
    "compute_constants", "check_general_position", "components_hit", "evaluate_condition",
    "xi_from", "theta_from", "COND1", "COND2", "NEITHER", "GeneralPositionReport",
]

# re-exported shape constructors
disc = _bodies.disc
ball = _bodies.ball
ellipse = _bodies.ellipse
