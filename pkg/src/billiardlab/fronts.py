"""Convex wavefronts: Riccati propagation, reflection jumps, tangent fronts.

A front sample is a :class:`FrontState`: a point with unit normal ``N`` (the
velocity of the normal geodesic), an orthonormal frame of ``N``'s
complement and the shape operator ``s`` written in that frame.  Along the
normal geodesic ``s`` obeys ``s' = R_N - s^2`` with
``(R_N)_ij = <R(N, e_i) N, e_j>``; at a reflection it jumps according to
the mirror law implemented in :func:`reflect_shape_operator`.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import _ode
from .billiard import (REFLECTION, TANGENCY, EXIT_EVENT, CUTOFF_EVENT, TANGENCY_TOL, _Engine)
from ._kernel import CUTOFF, EXIT
from .bodies import outward_normal
from .errors import (ConstructionFailedError, FocalPointError, GrazingError,
                     NotComparableError, NumericalError)
from .geometry import (FLAT, NUMERIC, PhasePoint, StepControl, complement_frame,
                       gram_schmidt, integrate_geodesic, transport_rhs)
from .scene import boundary_shape_operator

BLOWUP = 1e8


@dataclass(frozen=True)
class FrontState:
    base: PhasePoint
    frame: np.ndarray
    s: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "frame", np.atleast_2d(np.asarray(self.frame, dtype=float)))
        object.__setattr__(self, "s", np.atleast_2d(np.asarray(self.s, dtype=float)))

    @property
    def x(self):
        return self.base.x

    @property
    def N(self):
        return self.base.v

    def principal_curvatures(self):
        return np.linalg.eigvalsh(0.5 * (self.s + self.s.T))

    def min_curvature(self):
        return float(self.principal_curvatures().min())


@dataclass
class FrontPatch:
    """Sampled codimension-1 front over a parameter grid.

    ``states[i]`` is ``None`` where the sample was dropped (a hole).
    ``generator(u)`` re-evaluates ``(point, normal)`` at any parameter,
    which lets probes refine between samples.
    """

    params: np.ndarray
    states: list
    provenance: str
    generator: Optional[Callable] = None
    grid_shape: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def holes(self):
        return [i for i, s in enumerate(self.states) if s is None]

    def min_curvature(self):
        vals = [s.min_curvature() for s in self.states if s is not None]
        return min(vals) if vals else math.nan

    def __len__(self):
        return len(self.states)


# ---------------------------------------------------------------------------
# Riccati propagation

def _riccati_rhs(chart):
    n = chart.dim
    m = n - 1
    base = transport_rhs(chart, m)
    off = 2 * n + m * n

    def f(y):
        out = np.empty_like(y)
        out[:off] = base(y[:off])
        S = y[off:].reshape(m, m)
        E = y[2 * n:off].reshape(m, n)
        RN = chart.curvature_operator(y[:n], y[n:2 * n], E)
        out[off:] = (RN - S @ S).ravel()
        return out

    return f


def _pack_front(fs):
    return np.concatenate([fs.base.x, fs.base.v, fs.frame.ravel(), fs.s.ravel()])


def _unpack_front(y, n, t):
    m = n - 1
    off = 2 * n + m * n
    S = y[off:].reshape(m, m)
    return FrontState(PhasePoint(y[:n].copy(), y[n:2 * n].copy()), y[2 * n:off].reshape(m, n).copy(),
                      0.5 * (S + S.T), t)


def propagate_shape_operator(chart, f: FrontState, t, step_control: StepControl = StepControl(),
                             observer=None) -> FrontState:
    """Co-integrate the normal geodesic, its parallel frame and ``s' = R_N - s^2``.

    ``observer(t, FrontState)`` sees every accepted step.  Raises
    :class:`FocalPointError` when an eigenvalue exceeds ``1e8`` in size.
    """
    n = chart.dim
    m = n - 1
    off = 2 * n + m * n
    if t <= 0:
        return f

    def post(y):
        S = y[off:].reshape(m, m)
        y = y.copy()
        y[off:] = (0.5 * (S + S.T)).ravel()
        return y

    def check(tau, y):
        ev = np.linalg.eigvalsh(y[off:].reshape(m, m))
        big = float(np.max(np.abs(ev)))
        if not math.isfinite(big) or big > BLOWUP:
            raise FocalPointError(f"shape operator blew up at t={f.t + tau:.6g}",
                                  t_focal=f.t + tau + (1.0 / big if math.isfinite(big) else 0.0))

    obs = None
    if observer is not None:
        def obs(tau, y):
            observer(f.t + tau, _unpack_front(y, n, f.t + tau))

    try:
        y, _ = _ode.integrate(_riccati_rhs(chart), _pack_front(f), float(t), rtol=step_control.rtol,
                              atol=step_control.atol, h0=step_control.h0, hmax=step_control.hmax,
                              post_step=post, check=check, observer=obs)
    except FocalPointError:
        raise
    except NumericalError as exc:
        raise FocalPointError(f"Riccati integration failed near focus: {exc}", t_focal=None) from None
    return _unpack_front(y, n, f.t + t)


def reflect_shape_operator(chart, f: FrontState, s_K, frame_K, N_K, tangency_tol=TANGENCY_TOL) -> FrontState:
    """Jump of the shape operator at a specular reflection.

    For ``Y`` tangent to the obstacle with projections ``Y_-`` and ``Y_+`` onto
    the incoming and outgoing fronts,
    ``<s+ Y+, Z+> = <s- Y-, Z-> + 2 cos(phi) <s_K Y, Z>``.
    The outgoing frame is the reflected incoming frame, re-orthonormalised
    against the outgoing normal.
    """
    x = f.base.x
    ip = lambda a, b: chart.inner(x, a, b)  # noqa: E731
    Nm = chart.normalize(x, f.base.v)
    N_K = np.asarray(N_K, dtype=float)
    c = ip(Nm, N_K)
    if abs(c) < tangency_tol:
        raise GrazingError("grazing incidence: the jump law does not apply")
    if c > 0:
        raise GrazingError("front normal is not incoming at the obstacle")
    cosphi = -c
    Np = Nm - 2.0 * c * N_K
    Em = np.asarray(f.frame, dtype=float)
    refl = [e - 2.0 * ip(e, N_K) * N_K for e in Em]
    Ep = gram_schmidt(chart, x, [Np] + refl)[1:]
    m = len(Ep)
    A = np.empty((m, m))
    Bm = np.empty((m, len(frame_K)))
    cNN = ip(N_K, Np)
    for i, e in enumerate(Ep):
        Y = e - (ip(N_K, e) / cNN) * Np
        Ym = Y - ip(Y, Nm) * Nm
        A[i] = [ip(Ym, ek) for ek in Em]
        Bm[i] = [ip(Y, tk) for tk in frame_K]
    sp = A @ f.s @ A.T + 2.0 * cosphi * (Bm @ np.asarray(s_K) @ Bm.T)
    speed = chart.norm(x, f.base.v)
    return FrontState(PhasePoint(x, speed * Np), Ep, 0.5 * (sp + sp.T), f.t)


# ---------------------------------------------------------------------------
# fronts from bodies

def body_front(chart, body, params, orientation=1.0, provenance=None):
    """Front on a body's boundary with normal ``orientation * N_out``.

    The shape operator is ``orientation * s_K``; in 2D ``params`` are body
    angles, in 3D (polar, azimuth) pairs.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[0] == 1 and chart.dim == 2 and params.shape[1] > 1:
        params = params.T
    states = []
    for p in params:
        x = body.boundary_point(p)
        N, _ = outward_normal(chart, body, x)
        sK, frK = boundary_shape_operator(body, chart, x, tol=1e-7)
        if orientation < 0:
            N, sK = -N, -sK
        states.append(FrontState(PhasePoint(x, N), frK, sK, 0.0))

    def gen(u):
        x = body.boundary_point(np.atleast_1d(u))
        N, _ = outward_normal(chart, body, x)
        return x, orientation * N

    return FrontPatch(params, states, provenance or f"body_front(label={body.label}, sign={orientation:+g})",
                      generator=gen, grid_shape=(len(params),))


# ---------------------------------------------------------------------------
# tangent fronts

def _surface_rhs(chart, body):
    n = chart.dim

    def f(y):
        x = y[:n]
        v = y[n:]
        d = body.grad(x)
        gi = chart.ginv(x)
        w = gi @ d
        dd = float(d @ w)
        Hc = body.hess(x) - np.einsum("kij,k->ij", chart.gamma(x), d)
        a = -chart.connection(x, v, v) - (float(v @ Hc @ v) / dd) * w
        return np.concatenate([v, a])

    return f


def _surface_project(chart, body, speed=1.0):
    n = chart.dim

    def post(y):
        x = y[:n].copy()
        for _ in range(3):
            d = body.grad(x)
            w = chart.ginv(x) @ d
            x = x - body.psi(x) * w / float(d @ w)
        d = body.grad(x)
        w = chart.ginv(x) @ d
        v = y[n:] - (float(d @ y[n:]) / float(d @ w)) * w
        v = speed * v / chart.norm(x, v)
        return np.concatenate([x, v])

    return post


def surface_geodesic(chart, body, x, v, t, rtol=1e-12):
    """Geodesic of the hypersurface ``psi = 0`` (unit speed), projected each step."""
    if t == 0:
        return np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    n = chart.dim
    sgn = 1.0
    if t < 0:
        v, t, sgn = -np.asarray(v, dtype=float), -t, -1.0
    y, _ = _ode.integrate(_surface_rhs(chart, body), np.concatenate([x, v]), t, rtol=rtol, atol=rtol,
                          h0=min(0.01, t), post_step=_surface_project(chart, body))
    return y[:n], sgn * y[n:]


class TangentFrontMap:
    """The map ``u -> (y(u), N(u))`` of the tangent-front construction.

    ``x(u)`` runs along the geodesic sphere of radius ``eps + u_1`` in the
    obstacle boundary about ``x0* = exp(-eps V)``; ``y(u)`` is reached by
    flowing the boundary-tangent ray at ``x(u)`` forward for ``eps - u_1``.
    """

    def __init__(self, scene, body, x0, V, eps, rtol=1e-12):
        chart = scene.chart
        self.chart = chart
        self.scene = scene
        self.body = body
        self.eps = float(eps)
        self.rtol = rtol
        self.x0 = np.asarray(x0, dtype=float)
        self.V = chart.normalize(self.x0, V)
        xs, vs = surface_geodesic(chart, body, self.x0, -self.V, self.eps, rtol)
        self.x0star = xs
        self.omega0 = -vs
        n = chart.dim
        if n > 2:
            Nk, _ = outward_normal(chart, body, xs)
            # basis of the boundary tangent space orthogonal to omega0
            keep = [chart.normalize(xs, Nk), chart.normalize(xs, self.omega0)]
            for w in np.eye(n):
                for e in keep:
                    w = w - chart.inner(xs, w, e) * e
                nw = chart.norm(xs, w)
                if nw > 1e-6 and len(keep) < n:
                    keep.append(w / nw)
            self.wbasis = np.array(keep[2:])
        else:
            self.wbasis = np.zeros((0, n))

    def omega(self, rest):
        rest = np.asarray(rest, dtype=float)
        if rest.size == 0:
            return self.omega0
        w = self.wbasis.T @ rest
        r = self.chart.norm(self.x0star, w)
        if r == 0.0:
            return self.omega0
        a = r / self.eps
        return math.cos(a) * self.omega0 + math.sin(a) * w / r

    def touch(self, u):
        """Tangency point ``x(u)`` and unit boundary tangent ``T(u)``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return surface_geodesic(self.chart, self.body, self.x0star, self.omega(u[1:]),
                                self.eps + u[0], self.rtol)

    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        x, T = self.touch(u)
        end = integrate_geodesic(self.chart, PhasePoint(x, T), self.eps - u[0],
                                 StepControl(rtol=self.rtol, atol=self.rtol))
        return end.x, end.v


def shape_from_map(chart, gen, u, h):
    """Front state at ``u`` with ``s`` from central differences of ``gen``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    m = u.size
    y, N = gen(u)
    dy = np.empty((m, chart.dim))
    dN = np.empty((m, chart.dim))
    for a in range(m):
        e = np.zeros(m)
        e[a] = h
        yp, Np_ = gen(u + e)
        ym, Nm_ = gen(u - e)
        dy[a] = (yp - ym) / (2 * h)
        dN[a] = (Np_ - Nm_) / (2 * h)
    Nn = chart.normalize(y, N)
    tang = np.array([d - chart.inner(y, d, Nn) * Nn for d in dy])
    G = np.array([[chart.inner(y, a, b) for b in tang] for a in tang])
    covN = np.array([dN[a] + chart.connection(y, dy[a], N) for a in range(m)])
    A = np.array([[chart.inner(y, covN[a], tang[b]) for b in range(m)] for a in range(m)])
    L = np.linalg.cholesky(G)
    C = np.linalg.inv(L)
    frame = C @ tang
    s = C @ (0.5 * (A + A.T)) @ C.T
    return FrontState(PhasePoint(y, N), frame, s, 0.0)


def _obstacle_at(scene, x0):
    return min(scene.obstacles, key=lambda k: abs(k.psi(x0)))


def construct_tangent_front(scene, x0, V, eps, samples=None, obstacle=None,
                            grazing_tol=1e-5) -> FrontPatch:
    """Strictly convex front whose backward normal rays graze the obstacle near ``x0``.

    Raises :class:`ConstructionFailedError` if a sample fails the grazing,
    convexity or placement checks (a smaller ``eps`` usually helps).
    """
    chart = scene.chart
    body = obstacle or _obstacle_at(scene, x0)
    if abs(body.psi(x0)) > 1e-7:
        raise ConstructionFailedError("x0 is not on an obstacle boundary")
    nv = chart.norm(x0, V)
    Nk, _ = outward_normal(chart, body, x0)
    if abs(chart.inner(x0, V, Nk)) > 1e-8 * nv:
        raise ConstructionFailedError("V is not tangent to the obstacle boundary")
    try:
        gen = TangentFrontMap(scene, body, x0, V, eps)
    except NumericalError as exc:
        raise ConstructionFailedError(f"boundary geodesic failed: {exc}; try a smaller eps") from None
    m = chart.dim - 1
    if samples is None:
        samples = 9 if m == 1 else 5
    g1 = np.linspace(-eps / 2, eps / 2, samples)
    if m == 1:
        params = g1[:, None]
        shape = (samples,)
    else:
        mesh = np.meshgrid(*([g1] * m), indexing="ij")
        params = np.column_stack([a.ravel() for a in mesh])
        shape = (samples,) * m
    h = 1e-3 * eps
    states = []
    for u in params:
        try:
            fs = shape_from_map(chart, gen, u, h)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            raise ConstructionFailedError(f"front sample failed at u={u.tolist()}: {exc}; "
                                          "try a smaller eps") from None
        _validate_tangent_sample(scene, gen, body, u, fs, grazing_tol)
        states.append(fs)
    patch = FrontPatch(params, states, f"tangent_front(obstacle={body.label}, eps={eps:g})",
                       generator=gen, grid_shape=shape,
                       meta={"eps": eps, "x0": np.asarray(x0, float).tolist(),
                             "V": np.asarray(V, float).tolist(), "obstacle": body.label})
    return patch


def _validate_tangent_sample(scene, gen, body, u, fs, grazing_tol):
    chart = scene.chart
    y, N = fs.x, fs.N
    if scene.S.psi(y) >= 0:
        raise ConstructionFailedError("front sample outside S; try a smaller eps")
    for k in scene.obstacles:
        if k.psi(y) <= 0:
            raise ConstructionFailedError("front sample inside an obstacle; try a smaller eps")
    back = integrate_geodesic(chart, PhasePoint(y, -N), gen.eps - u[0],
                              StepControl(rtol=gen.rtol, atol=gen.rtol))
    Nk, _ = outward_normal(chart, body, back.x)
    cos = abs(chart.inner(back.x, back.v, Nk)) / chart.norm(back.x, back.v)
    if abs(body.psi(back.x)) > 1e-7 or cos >= grazing_tol:
        raise ConstructionFailedError(f"normal ray does not graze the obstacle (|cos|={cos:.2e}); "
                                      "try a smaller eps")
    if fs.min_curvature() <= 0:
        raise ConstructionFailedError("front is not strictly convex; try a smaller eps")


def tangent_front_auto(scene, x0, V, kappa_min, samples=None, obstacle=None, halvings=8):
    """Tangent front with the default eps policy: ``0.05 / kappa_min``, halved on failure."""
    eps = 0.05 / kappa_min
    last = None
    for _ in range(halvings + 1):
        try:
            return construct_tangent_front(scene, x0, V, eps, samples=samples, obstacle=obstacle)
        except ConstructionFailedError as exc:
            last = exc
            eps *= 0.5
    raise ConstructionFailedError(f"no valid eps after {halvings} halvings: {last}")


def random_tangent_data(scene, rng):
    """Random obstacle boundary point and unit tangent direction."""
    chart = scene.chart
    k = scene.obstacles[int(rng.integers(scene.d))]
    x0 = k.boundary_point(k.sample_directions(1, rng)[0])
    Nk, _ = outward_normal(chart, k, x0)
    fr = complement_frame(chart, x0, Nk)
    if len(fr) == 1:
        V = fr[0] * (1.0 if rng.uniform() < 0.5 else -1.0)
    else:
        c = rng.normal(size=len(fr))
        V = fr.T @ (c / np.linalg.norm(c))
    return k, x0, V


def estimate_theta0(scene, estimation, kappa_min):
    if scene.d == 0:
        return {"theta0": None, "fronts": 0}
    rng = np.random.default_rng(estimation.seed + 1)
    lows = []
    failures = 0
    for _ in range(estimation.fronts):
        k, x0, V = random_tangent_data(scene, rng)
        try:
            p = tangent_front_auto(scene, x0, V, kappa_min, samples=5, obstacle=k)
        except ConstructionFailedError:
            failures += 1
            continue
        lows.append(p.min_curvature())
    if not lows:
        return {"theta0": None, "fronts": 0, "failures": failures}
    return {"theta0": estimation.theta0_factor * min(lows), "fronts": len(lows),
            "failures": failures, "min_observed": min(lows)}


# ---------------------------------------------------------------------------
# billiard propagation of fronts

@dataclass
class SampleLog:
    reflections: list = field(default_factory=list)  # dicts per reflection
    series: list = field(default_factory=list)  # (t, min eig) at accepted steps
    checkpoints: list = field(default_factory=list)  # (t, FrontState)
    min_eig: float = math.inf
    status: str = "ok"
    end_reason: str = ""
    error: Optional[str] = None


def propagate_front_state(scene, fs: FrontState, t_end=math.inf, max_reflections=50, checkpoints=(),
                          tangency_tol=TANGENCY_TOL, engine=None, step_control=StepControl(),
                          only_bodies=None):
    """Billiard-propagate one front sample; returns ``(state, SampleLog)``.

    ``only_bodies`` restricts reflections to the listed obstacle labels in
    that order (used when following a fixed itinerary).
    """
    chart = scene.chart
    eng = engine or _Engine(scene)
    log = SampleLog()
    cps = sorted(c for c in checkpoints if c >= fs.t)
    kappa = None

    def obs(t, st):
        k = st.min_curvature()
        log.series.append((t, k))
        if k < log.min_eig:
            log.min_eig = k

    log.min_eig = fs.min_curvature()
    log.series.append((fs.t, log.min_eig))
    st = fs
    skip = eng.initial_skip(st.x)
    h = 0.05
    nrefl = 0
    horizon = t_end if math.isfinite(t_end) else 100.0 * scene.D
    while True:
        code, b, dt, y, h = eng.advance(st.base.state, horizon - st.t, skip, h)
        t_event = st.t + float(dt)
        # integrate the Riccati system to the event, stopping at checkpoints
        while cps and cps[0] <= t_event:
            tc = cps.pop(0)
            st = propagate_shape_operator(chart, st, tc - st.t, step_control, obs)
            log.checkpoints.append((tc, st))
        st = propagate_shape_operator(chart, st, t_event - st.t, step_control, obs)
        n = chart.dim
        ev = eng.classify(code, b, t_event, y, tangency_tol)
        # snap to the kernel's event state
        v = y[n:]
        E = gram_schmidt(chart, y[:n], [v] + list(st.frame))[1:]
        st = FrontState(PhasePoint(y[:n].copy(), v.copy()), E, st.s, t_event)
        if ev.kind == CUTOFF_EVENT:
            log.end_reason = "t_end"
            return st, log
        if ev.kind == EXIT_EVENT:
            log.end_reason = "exit"
            return st, log
        if ev.kind == REFLECTION:
            body = scene.bodies[b]
            sK, frK = boundary_shape_operator(body, chart, st.x, tol=1e-7)
            kmin_before = st.min_curvature()
            new = reflect_shape_operator(chart, st, sK, frK, ev.normal, tangency_tol)
            nrefl += 1
            kK = float(np.linalg.eigvalsh(sK).min())
            log.reflections.append({
                "t": t_event, "body": b, "incidence": ev.incidence_angle,
                "cos_phi": math.cos(ev.incidence_angle), "kmin_before": kmin_before,
                "kmin_after": new.min_curvature(), "kappa_point": kK,
            })
            st = new
            if new.min_curvature() < log.min_eig:
                log.min_eig = new.min_curvature()
            log.series.append((t_event, new.min_curvature()))
            if only_bodies is not None and (nrefl > len(only_bodies) or only_bodies[nrefl - 1] != b):
                log.end_reason = "itinerary"
                return st, log
            if nrefl >= max_reflections:
                log.end_reason = "max_reflections"
                while cps and cps[0] <= st.t:
                    log.checkpoints.append((cps.pop(0), st))
                return st, log
        skip = [False] * len(scene.bodies)
        skip[b] = True


def propagate_front_patch(scene, patch: FrontPatch, t_end=math.inf, max_reflections=50, checkpoints=(),
                          tangency_tol=TANGENCY_TOL, step_control=StepControl()):
    """Propagate every sample; failed samples become holes.

    Returns ``(patch_at_end, log)``; the log carries per-sample logs and the
    minimum eigenvalue over all samples and times.
    """
    eng = _Engine(scene)
    states, logs = [], []
    for fs in patch.states:
        if fs is None:
            states.append(None)
            logs.append(None)
            continue
        try:
            st, lg = propagate_front_state(scene, fs, t_end, max_reflections, checkpoints, tangency_tol,
                                           eng, step_control)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            lg = SampleLog(status="dropped", error=f"{type(exc).__name__}: {exc}")
            st = None
        states.append(st)
        logs.append(lg)
    mins = [lg.min_eig for lg in logs if lg is not None and lg.status == "ok"]
    out = FrontPatch(patch.params, states, patch.provenance + " -> propagated", patch.generator,
                     patch.grid_shape, dict(patch.meta))
    log = {
        "samples": logs,
        "min_eig": min(mins) if mins else math.nan,
        "holes": [i for i, s in enumerate(states) if s is None],
        "reflections": sum(len(lg.reflections) for lg in logs if lg is not None),
    }
    return out, log


def min_eig_series(log, times):
    """Minimum over samples of the interpolated min-eigenvalue at each checkpoint time."""
    out = []
    for t in times:
        vals = []
        for lg in log["samples"]:
            if lg is None or lg.status != "ok":
                continue
            for tc, st in lg.checkpoints:
                if abs(tc - t) < 1e-12:
                    vals.append(st.min_curvature())
        out.append(min(vals) if vals else math.nan)
    return out


def reflection_jumps(log, kappa_min):
    """Per-reflection margin ``k+ - (k- + 2 kappa_min cos phi)`` (should be >= 0)."""
    out = []
    for lg in log["samples"]:
        if lg is None:
            continue
        for r in lg.reflections:
            out.append(r["kmin_after"] - (r["kmin_before"] + 2 * kappa_min * r["cos_phi"]))
    return out


# ---------------------------------------------------------------------------
# separation bound

def _chord_length(chart, pts):
    return sum(chart.distance(a, b) for a, b in zip(pts[:-1], pts[1:]))


def _richardson_length(chart, pts):
    fine = _chord_length(chart, pts)
    if len(pts) >= 5 and (len(pts) - 1) % 2 == 0:
        coarse = _chord_length(chart, pts[::2])
        return fine + (fine - coarse) / 3.0
    return fine


def _dijkstra(chart, pts, shape, src, dst):
    rows, cols = shape
    dist = {src: 0.0}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, i = heapq.heappop(heap)
        if i in done:
            continue
        if i == dst:
            return d
        done.add(i)
        r, c = divmod(i, cols)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    j = rr * cols + cc
                    if pts[j] is None or j in done:
                        continue
                    nd = d + chart.distance(pts[i], pts[j])
                    if nd < dist.get(j, math.inf):
                        dist[j] = nd
                        heapq.heappush(heap, (nd, j))
    return math.inf


@dataclass
class SeparationReport:
    d_X: float
    d_Xt: float
    k_min: float
    k_min_final: float
    t_n: float
    bound: float
    bound_final_reading: float
    passed: bool
    reflections: int
    itinerary: tuple

    @property
    def ratio(self):
        return self.d_Xt / self.bound if self.bound > 0 else math.inf


def front_separation_check(scene, patch: FrontPatch, u0, u1, t, samples=33, max_reflections=1000,
                           step_control=StepControl()) -> SeparationReport:
    """Check ``d_{X_t} >= d_X exp(t_n k_min)`` between parameters ``u0`` and ``u1``.

    In 2D the parameter segment ``[u0, u1]`` is sampled densely, propagated,
    and both intrinsic distances are measured by Richardson-extrapolated
    chord sums.  In 3D ``u0``/``u1`` are opposite corners of a parameter
    rectangle and distances are graph shortest paths over the sampled grid.
    ``k_min`` is the infimum of the minimum principal curvature over all
    samples and times in ``[0, t]``; ``t_n`` is the last reflection time
    (``t`` when there is none).
    """
    chart = scene.chart
    gen = patch.generator
    if gen is None:
        raise NotComparableError("patch has no generator to sample between parameters")
    dim = chart.dim
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    if dim == 2:
        if samples % 2 == 0:
            samples += 1
        us = [u0 + (u1 - u0) * a for a in np.linspace(0, 1, samples)]
        shape = (samples,)
    else:
        k = int(max(5, round(math.sqrt(samples))))
        a = np.linspace(0, 1, k)
        us = [np.array([u0[0] + (u1[0] - u0[0]) * i, u0[1] + (u1[1] - u0[1]) * j]) for i in a for j in a]
        shape = (k, k)
    h = 1e-4 * max(float(np.max(np.abs(u1 - u0))), 1e-6)
    if isinstance(gen, TangentFrontMap):
        h = 1e-3 * gen.eps
    eng = _Engine(scene)
    starts, ends, logs = [], [], []
    for u in us:
        fs = _state_at(chart, patch, u, h)
        starts.append(fs.x)
        try:
            st, lg = propagate_front_state(scene, fs, t_end=t, max_reflections=max_reflections,
                                           checkpoints=(t,), engine=eng, step_control=step_control)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            raise NotComparableError(f"sample at u={u.tolist()} could not be propagated: {exc}") from None
        if lg.end_reason != "t_end" and not (lg.checkpoints and abs(lg.checkpoints[-1][0] - t) < 1e-12):
            raise NotComparableError(f"sample at u={u.tolist()} stopped early ({lg.end_reason})")
        ends.append(st.x if not lg.checkpoints else lg.checkpoints[-1][1].x)
        logs.append(lg)
    its = {tuple(r["body"] for r in lg.reflections) for lg in logs}
    if len(its) != 1:
        raise NotComparableError("samples between u0 and u1 follow different itineraries (patch hole)")
    itin = its.pop()
    k_min = min(min(k for _, k in lg.series if _ <= t + 1e-12) for lg in logs)
    k_fin = min(lg.checkpoints[-1][1].min_curvature() for lg in logs)
    t_n = min(lg.reflections[-1]["t"] for lg in logs) if itin else float(t)
    if dim == 2:
        d_X = _richardson_length(chart, starts)
        d_Xt = _richardson_length(chart, ends)
    else:
        src, dst = 0, len(us) - 1
        d_X = _dijkstra(chart, starts, shape, src, dst)
        d_Xt = _dijkstra(chart, ends, shape, src, dst)
    bound = d_X * math.exp(t_n * k_min)
    return SeparationReport(d_X=d_X, d_Xt=d_Xt, k_min=k_min, k_min_final=k_fin, t_n=t_n, bound=bound,
                            bound_final_reading=d_X * math.exp(t_n * k_fin),
                            passed=bool(d_Xt >= bound * (1 - 1e-9)), reflections=len(itin), itinerary=itin)


def _state_at(chart, patch, u, h):
    """Front state at an arbitrary parameter: stored sample if present, else rebuilt."""
    for p, s in zip(patch.params, patch.states):
        if s is not None and np.allclose(p, u, rtol=0, atol=1e-15):
            return s
    if isinstance(patch.generator, TangentFrontMap):
        return shape_from_map(chart, patch.generator, u, h)
    return shape_from_map(chart, patch.generator, u, h)


# ---------------------------------------------------------------------------
# collision probe

@dataclass
class CollisionReport:
    roots: list
    separation_radii: list
    discreteness_violated: bool
    hit_domain: list
    curvatures: list
    message: str = ""


def _ray_hit(chart, x, N, ygen, w_range, w_guess, tmax):
    """Solve ``ray(tau) = Y(w)`` by Newton; returns ``(tau, w)`` or ``None``."""
    lo, hi = w_range
    tau, w = w_guess
    for _ in range(50):
        if chart.kind == FLAT:
            p = x + tau * N
            v = N
        else:
            end = integrate_geodesic(chart, PhasePoint(x, N), max(tau, 0.0))
            p, v = end.x, end.v
        yw, _ = ygen(np.array([w]))
        hw = 1e-6 * max(1.0, abs(w))
        dyw = (ygen(np.array([w + hw]))[0] - ygen(np.array([w - hw]))[0]) / (2 * hw)
        F = p - yw
        J = np.column_stack([v, -dyw])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        tau += step[0]
        w += step[1]
        if not (lo - 1e-9 <= w <= hi + 1e-9) or tau < 0 or tau > tmax:
            return None
        if np.linalg.norm(step) < 1e-14:
            break
    if np.linalg.norm(F) > 1e-8:
        return None
    return tau, w


def front_collision_probe(scene_or_chart, X: FrontPatch, Y: FrontPatch, x_range=None, y_range=None,
                          grid=2001, tol=1e-9, tmax=None) -> CollisionReport:
    """Parameters where the normal ray of ``X`` meets ``Y`` orthogonally (2D).

    The orthogonality defect ``g(u) = <ray velocity, dY/dw> / |dY/dw|`` is
    evaluated on a grid over the part of ``X`` whose rays hit ``Y``; sign
    changes are refined with Brent's method.  Three or more consecutive
    grid values with ``|g| <= tol`` are reported as a discreteness
    violation.  Each root carries a separation radius: the distance to the
    nearest other root or to the edge of the hit domain.
    """
    chart = getattr(scene_or_chart, "chart", scene_or_chart)
    if chart.dim != 2:
        raise NotImplementedError("the collision probe is implemented for n = 2")
    xr = x_range or (float(X.params[:, 0].min()), float(X.params[:, 0].max()))
    yr = y_range or (float(Y.params[:, 0].min()), float(Y.params[:, 0].max()))
    tmax = tmax or 1e6
    xg, yg = X.generator, Y.generator
    ys = np.linspace(yr[0], yr[1], 801)
    ypts = np.array([yg(np.array([w]))[0] for w in ys])

    def guess(x, N):
        # first crossing of the straight ray with the polyline through Y
        a, d = ypts[:-1], np.diff(ypts, axis=0)
        r = a - x
        den = N[0] * d[:, 1] - N[1] * d[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = (r[:, 0] * d[:, 1] - r[:, 1] * d[:, 0]) / den
            sp = (r[:, 0] * N[1] - r[:, 1] * N[0]) / den
        ok = (np.abs(den) > 1e-15) & (tau > 0) & (sp >= -1e-9) & (sp <= 1 + 1e-9)
        if not ok.any():
            return None
        i = int(np.argmin(np.where(ok, tau, np.inf)))
        return tau[i], ys[i] + sp[i] * (ys[i + 1] - ys[i])

    cache = {}

    def hit(u):
        if u in cache:
            return cache[u]
        x, N = xg(np.array([u]))
        N = chart.normalize(x, N)
        g0 = guess(x, N)
        res = None
        if g0 is not None:
            sol = _ray_hit(chart, x, N, yg, yr, g0, tmax)
            if sol is not None:
                tau, w = sol
                if chart.kind == FLAT:
                    v = N
                else:
                    v = integrate_geodesic(chart, PhasePoint(x, N), tau).v
                hw = 1e-6 * max(1.0, abs(w))
                p = yg(np.array([w]))[0]
                dyw = (yg(np.array([w + hw]))[0] - yg(np.array([w - hw]))[0]) / (2 * hw)
                gval = chart.inner(p, v, dyw) / (chart.norm(p, dyw) * chart.norm(p, v))
                res = (gval, tau, w)
        cache[u] = res
        return res

    us = np.linspace(xr[0], xr[1], grid)
    vals = [hit(float(u)) for u in us]
    valid = np.array([v is not None for v in vals])
    roots, domain = [], []
    near = 0
    for i, v in enumerate(vals):
        if v is not None and abs(v[0]) <= tol:
            near += 1
            if near >= 3:
                kx = shape_from_map(chart, xg, np.array([us[i]]), 1e-4).s[0, 0]
                ky = shape_from_map(chart, yg, np.array([v[2]]), 1e-4).s[0, 0]
                curv = [{"u": float(us[i]), "w": float(v[2]), "k_X": float(kx), "k_Y": float(ky),
                         "hypothesis": bool(ky < 0.0 < kx)}]
                return CollisionReport([], [], True, [], curv, "defect vanishes on an interval: "
                                       "discreteness violated (curvature hypothesis likely fails)")
        else:
            near = 0
    # hit-domain runs with refined edges
    i = 0
    while i < grid:
        if not valid[i]:
            i += 1
            continue
        j = i
        while j + 1 < grid and valid[j + 1]:
            j += 1
        lo = us[i] if i == 0 else _edge(hit, us[i - 1], us[i])
        hi = us[j] if j == grid - 1 else _edge(hit, us[j + 1], us[j])
        domain.append((lo, hi))
        for k in range(i, j):
            a, b = vals[k][0], vals[k + 1][0]
            if a == 0.0:
                roots.append(float(us[k]))
            elif a * b < 0:
                r = brentq(lambda u: hit(float(u))[0], us[k], us[k + 1], xtol=1e-14)
                roots.append(float(r))
        if vals[j][0] == 0.0:
            roots.append(float(us[j]))
        i = j + 1
    radii = []
    for r in roots:
        others = [abs(r - q) for q in roots if q != r]
        edges = [min(r - lo, hi - r) for lo, hi in domain if lo <= r <= hi]
        radii.append(min(others + edges) if (others or edges) else math.inf)
    curv = []
    for r in roots:
        _, _, w = hit(float(r))
        kx = shape_from_map(chart, xg, np.array([r]), 1e-4).s[0, 0]
        ky = shape_from_map(chart, yg, np.array([w]), 1e-4).s[0, 0]
        curv.append({"u": r, "w": float(w), "k_X": float(kx), "k_Y": float(ky),
                     "hypothesis": bool(ky < 0.0 < kx)})
    return CollisionReport(roots, radii, False, domain, curv,
                           f"{len(roots)} isolated orthogonal hit(s)")


def _edge(hit, bad, good, iters=60):
    for _ in range(iters):
        mid = 0.5 * (bad + good)
        if hit(float(mid)) is None:
            bad = mid
        else:
            good = mid
    return float(good)
