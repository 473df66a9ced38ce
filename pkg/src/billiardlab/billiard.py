"""Billiard flow in ``S`` minus the obstacles: events, traces, travelling times."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from ._kernel import CROSS, CUTOFF, EXIT, TOUCH
from .bodies import outward_normal
from .errors import GrazingError, ItineraryError
from .geometry import PhasePoint, complement_frame, integrate_geodesic, StepControl

TANGENCY_TOL = 1e-6
ON_BOUNDARY = 1e-9

REFLECTION = "reflection"
TANGENCY = "tangency"
EXIT_EVENT = "exit"
CUTOFF_EVENT = "cutoff"

EXITED = "Exited"
TRAPPED = "Trapped"
SINGULAR = "Singular"


@dataclass(frozen=True)
class Event:
    kind: str
    t: float
    state_before: PhasePoint
    state_after: PhasePoint
    body: Optional[int] = None
    incidence_angle: Optional[float] = None
    normal: Optional[np.ndarray] = None
    reason: Optional[str] = None


@dataclass(frozen=True)
class Limits:
    t_max: float
    max_reflections: int

    @classmethod
    def for_scene(cls, scene, t_max=None, max_reflections=None):
        xi = scene.xi() or 3
        return cls(t_max=100.0 * scene.D if t_max is None else float(t_max),
                   max_reflections=50 * xi if max_reflections is None else int(max_reflections))


@dataclass
class Trajectory:
    start: PhasePoint
    events: list
    total_time: float
    exited: bool
    cutoff_reason: Optional[str] = None

    @property
    def tangencies(self):
        return sum(1 for e in self.events if e.kind == TANGENCY)

    @property
    def reflections(self):
        return sum(1 for e in self.events if e.kind == REFLECTION)

    @property
    def singular(self):
        return self.tangencies > 0

    @property
    def trapped(self):
        return not self.exited

    @property
    def status(self):
        # tangency takes precedence; exited/trapped remain available as flags
        if self.singular:
            return SINGULAR
        return EXITED if self.exited else TRAPPED

    @property
    def end(self):
        return self.events[-1].state_after if self.events else self.start

    def first_tangency_time(self):
        for e in self.events:
            if e.kind == TANGENCY:
                return e.t
        return None

    def arcs(self):
        """``(t0, start_state)`` for each geodesic arc."""
        out = [(0.0, self.start)]
        for e in self.events:
            if e.kind == REFLECTION:
                out.append((e.t, e.state_after))
        return out

    def position_at(self, chart, t):
        t = min(max(t, 0.0), self.total_time)
        arcs = self.arcs()
        t0, st = arcs[0]
        for a in arcs[1:]:
            if a[0] <= t:
                t0, st = a
        return integrate_geodesic(chart, st, t - t0).x


@dataclass(frozen=True)
class TravelRecord:
    x: np.ndarray
    y: np.ndarray
    t: float
    sigma: PhasePoint
    tangencies: int
    reflections: int = 0
    itinerary: tuple = ()
    x_point: Optional[np.ndarray] = None
    y_point: Optional[np.ndarray] = None
    exit_velocity: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TrappedMarker:
    sigma: PhasePoint
    limits: Limits
    reason: str
    reflections: int
    tangencies: int = 0


@dataclass(frozen=True)
class Itinerary:
    symbols: tuple
    truncated_at: int

    def __len__(self):
        return len(self.symbols)


@dataclass(frozen=True)
class Sampler:
    kind: str = "random"
    count: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("grid", "random"):
            raise ValueError("sampler kind must be 'grid' or 'random'")
        if self.count < 1:
            raise ValueError("sampler count must be >= 1")


# ---------------------------------------------------------------------------
# events

class _Engine:
    """Per-scene event stepping with kernel dispatch."""

    def __init__(self, scene, use_core=None):
        self.scene = scene
        self.chart = scene.chart
        self.packed = scene.packed()
        self.use_core = kernels.HAVE_CORE if use_core is None else use_core
        if self.packed is None:
            self.use_core = False
        self.hmax = scene.hmax()
        self.bodies = scene.bodies

    def initial_skip(self, x):
        # exit detection is armed once the ray is strictly inside S
        skip = [abs(b.psi(x)) <= ON_BOUNDARY for b in self.bodies]
        skip[0] = self.bodies[0].psi(x) >= -ON_BOUNDARY
        return skip

    def advance(self, y, t_max, skip, h0):
        if self.packed is not None:
            return kernels.advance_packed(self.packed, y, t_max, np.asarray(skip, dtype=np.intc),
                                          self.hmax, h0, use_core=self.use_core)
        return kernels.advance_generic(self.chart, self.bodies, y, t_max, skip, self.hmax, h0)

    def classify(self, code, b, t, y, tangency_tol):
        chart = self.chart
        n = chart.dim
        st = PhasePoint(y[:n].copy(), y[n:].copy())
        if code == CUTOFF:
            return Event(CUTOFF_EVENT, t, st, st, reason="t_max")
        if code == EXIT:
            return Event(EXIT_EVENT, t, st, st, body=0)
        body = self.bodies[b]
        N, _ = outward_normal(chart, body, st.x)
        speed = chart.norm(st.x, st.v)
        vn = chart.inner(st.x, st.v, N)
        cosphi = min(1.0, abs(vn) / speed)
        phi = math.acos(cosphi)
        if code == TOUCH or abs(vn) < tangency_tol:
            return Event(TANGENCY, t, st, st, body=b, incidence_angle=phi, normal=N)
        after = PhasePoint(st.x, reflect(chart, st.v, N, x=st.x, tangency_tol=tangency_tol))
        return Event(REFLECTION, t, st, after, body=b, incidence_angle=phi, normal=N)


def reflect(chart, v, N_K, x=None, tangency_tol=TANGENCY_TOL):
    """Specular reflection ``v - 2 <v, N> N`` for a unit outward normal ``N``."""
    v = np.asarray(v, dtype=float)
    N_K = np.asarray(N_K, dtype=float)
    if x is None:
        if chart.kind != "flat-cartesian":
            raise ValueError("base point required for non-flat charts")
        x = np.zeros(chart.dim)
    vn = chart.inner(x, v, N_K)
    if abs(vn) < tangency_tol:
        raise GrazingError("grazing incidence: classify as tangency")
    return v - 2.0 * vn * N_K


def step_to_event(scene, state: PhasePoint, t_max, tangency_tol=TANGENCY_TOL, skip=None,
                  use_core=None) -> Event:
    """First event along the geodesic from ``state`` within ``t_max``."""
    eng = _Engine(scene, use_core)
    if skip is None:
        skip = eng.initial_skip(state.x)
    code, b, t, y, _ = eng.advance(state.state, float(t_max), skip, 0.05)
    return eng.classify(code, b, float(t), y, tangency_tol)


def trace(scene, sigma: PhasePoint, limits: Optional[Limits] = None, tangency_tol=TANGENCY_TOL,
          use_core=None, engine=None) -> Trajectory:
    """Chain events from ``sigma`` until exit or a limit."""
    limits = limits or Limits.for_scene(scene)
    eng = engine or _Engine(scene, use_core)
    events = []
    t = 0.0
    st = sigma
    skip = eng.initial_skip(st.x)
    h = 0.05
    last_refl = None
    nrefl = 0
    while True:
        code, b, dt, y, h = eng.advance(st.state, limits.t_max - t, skip, h)
        t += float(dt)
        ev = eng.classify(code, b, t, y, tangency_tol)
        events.append(ev)
        if ev.kind == CUTOFF_EVENT:
            return Trajectory(sigma, events, t, False, "t_max")
        if ev.kind == EXIT_EVENT:
            return Trajectory(sigma, events, t, True)
        if ev.kind == REFLECTION:
            if last_refl == b:
                raise ItineraryError(f"consecutive reflections on obstacle {b}")
            last_refl = b
            nrefl += 1
            if nrefl >= limits.max_reflections:
                events.append(Event(CUTOFF_EVENT, t, ev.state_after, ev.state_after,
                                    reason="max_reflections"))
                return Trajectory(sigma, events, t, False, "max_reflections")
        skip = [False] * len(eng.bodies)
        skip[b] = True
        st = ev.state_after


def itinerary(traj: Trajectory) -> Itinerary:
    sym = tuple(e.body for e in traj.events if e.kind == REFLECTION)
    for a, b in zip(sym, sym[1:]):
        if a == b:
            raise ItineraryError("consecutive itinerary symbols coincide")
    return Itinerary(sym, len(sym))


def eta_distance(a, b) -> float:
    """Coding distance ``sum 2^-i [a_i != b_i]`` for finite itineraries.

    Positions past the shorter truncation count as mismatches up to the
    longer one; nothing is counted beyond both.
    """
    sa = a.symbols if isinstance(a, Itinerary) else tuple(a)
    sb = b.symbols if isinstance(b, Itinerary) else tuple(b)
    la = a.truncated_at if isinstance(a, Itinerary) else len(sa)
    lb = b.truncated_at if isinstance(b, Itinerary) else len(sb)
    lo, hi = min(la, lb), max(la, lb)
    total = 0.0
    for i in range(1, hi + 1):
        if i > lo or sa[i - 1] != sb[i - 1]:
            total += 2.0 ** -i
    return total


# ---------------------------------------------------------------------------
# boundary sampling

def inward_sigma(scene, params, alpha, beta=0.0):
    """Inward unit vector at boundary parameter ``params``.

    ``alpha`` is the angle from the inward normal; in 3D ``beta`` is the
    azimuth in the tangent plane.
    """
    chart = scene.chart
    x = scene.boundary.point(params)
    nin = scene.inward_normal(x)
    frame = complement_frame(chart, x, nin)
    if chart.dim == 2:
        # orient the tangent counter-clockwise about the body
        tvec = frame[0]
        rel = x - scene.S.center
        if rel[0] * tvec[1] - rel[1] * tvec[0] < 0:
            tvec = -tvec
        v = math.cos(alpha) * nin + math.sin(alpha) * tvec
    else:
        v = math.cos(alpha) * nin + math.sin(alpha) * (math.cos(beta) * frame[0] + math.sin(beta) * frame[1])
    return PhasePoint(x, chart.normalize(x, v))


def grid_shape(count):
    """Split ``count`` into (angles, positions); angles is odd so the normal ray is included."""
    best = 1
    for m in range(1, int(math.isqrt(count)) + 1):
        if count % m == 0 and m % 2 == 1:
            best = m
    return best, count // best


def sampler_sigmas(scene, sampler: Sampler):
    """Deterministic list of inward phase points for a sampler."""
    out = []
    if scene.dim == 2:
        L = scene.boundary.length
        if sampler.kind == "grid":
            ma, ms = grid_shape(sampler.count)
            for i in range(ms):
                for j in range(ma):
                    a = (j - (ma - 1) / 2) * math.pi / ma
                    out.append(inward_sigma(scene, [i * L / ms], a))
        else:
            rng = np.random.default_rng(sampler.seed)
            s = rng.uniform(0, L, sampler.count)
            a = np.arcsin(rng.uniform(-1, 1, sampler.count))
            out = [inward_sigma(scene, [si], ai) for si, ai in zip(s, a)]
        return out
    if sampler.kind == "grid":
        md, mp = grid_shape(sampler.count)
        pts = scene.S.sample_directions(mp)
        for p in pts:
            for j in range(md):
                k = j + 0.5
                a = math.asin(math.sqrt(k / md))
                b = math.pi * (1 + 5 ** 0.5) * k
                out.append(inward_sigma(scene, p, a, b))
        return out
    rng = np.random.default_rng(sampler.seed)
    pts = scene.S.sample_directions(sampler.count, rng)
    a = np.arcsin(np.sqrt(rng.uniform(0, 1, sampler.count)))
    b = rng.uniform(0, 2 * math.pi, sampler.count)
    return [inward_sigma(scene, p, ai, bi) for p, ai, bi in zip(pts, a, b)]


# ---------------------------------------------------------------------------
# travelling times

def travelling_time(scene, sigma: PhasePoint, limits: Optional[Limits] = None,
                    tangency_tol=TANGENCY_TOL, use_core=None, engine=None):
    limits = limits or Limits.for_scene(scene)
    traj = trace(scene, sigma, limits, tangency_tol, use_core, engine)
    return record_from(scene, sigma, traj, limits)


def record_from(scene, sigma, traj, limits):
    if not traj.exited:
        return TrappedMarker(sigma, limits, traj.cutoff_reason, traj.reflections, traj.tangencies)
    end = traj.events[-1].state_before
    return TravelRecord(x=scene.boundary.params(sigma.x), y=scene.boundary.params(end.x),
                        t=traj.total_time, sigma=sigma, tangencies=traj.tangencies,
                        reflections=traj.reflections, itinerary=itinerary(traj).symbols,
                        x_point=sigma.x, y_point=end.x, exit_velocity=end.v)


@dataclass
class TravelSample:
    records: list
    trapped: list
    outcomes: list = field(default_factory=list)  # per-ray record or marker, index order
    stats: dict = field(default_factory=dict)


def _trace_chunk(args):
    scene, sigmas, limits, tol = args
    eng = _Engine(scene)
    return [travelling_time(scene, s, limits, tol, engine=eng) for s in sigmas]


def sample_travel_times(scene, sampler: Sampler, limits: Optional[Limits] = None,
                        tangency_tol=TANGENCY_TOL, workers=1) -> TravelSample:
    """Trace every sampler ray; records are merged in sampler index order."""
    limits = limits or Limits.for_scene(scene)
    sigmas = sampler_sigmas(scene, sampler)
    if workers and workers > 1:
        chunks = [sigmas[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_trace_chunk, [(scene, c, limits, tangency_tol) for c in chunks]))
        outcomes = [None] * len(sigmas)
        for w, part in enumerate(parts):
            outcomes[w::workers] = part
    else:
        outcomes = _trace_chunk((scene, sigmas, limits, tangency_tol))
    records = [o for o in outcomes if isinstance(o, TravelRecord)]
    trapped = [o for o in outcomes if isinstance(o, TrappedMarker)]
    tang = [o.tangencies for o in outcomes]
    stats = {
        "count": len(outcomes), "exited": len(records), "trapped": len(trapped),
        "trapped_fraction": len(trapped) / len(outcomes),
        "singular": sum(1 for k in tang if k > 0),
        "tangency_counts": {str(k): tang.count(k) for k in sorted(set(tang))},
        "sampler": {"kind": sampler.kind, "count": sampler.count, "seed": sampler.seed},
        "limits": {"t_max": limits.t_max, "max_reflections": limits.max_reflections},
        "tangency_tol": tangency_tol,
    }
    return TravelSample(records, trapped, outcomes, stats)


# ---------------------------------------------------------------------------
# smooth geodesics and incidence statistics

class _Stop(Exception):
    pass


def smooth_geodesic_samples(scene, p, v, step=None):
    """Points of the full smooth geodesic of ``S`` through ``(p, v)``, obstacles ignored."""
    chart = scene.chart
    S = scene.S
    step = step or min([float(getattr(k, "scale", 0.1)) for k in scene.obstacles] + [scene.D]) / 8
    pts = [np.asarray(p, dtype=float)]
    for sgn in (1.0, -1.0):
        seg = []

        def obs(tau, y, seg=seg):
            if S.psi(y[:chart.dim]) > 0:
                raise _Stop
            seg.append(y[:chart.dim].copy())

        try:
            integrate_geodesic(chart, PhasePoint(p, sgn * chart.normalize(p, v)), 4 * scene.D,
                               StepControl(hmax=step), observer=obs)
        except _Stop:
            pass
        pts = (seg[::-1] + pts) if sgn < 0 else (pts + seg)
    return np.array(pts)


def window_statistic(incidences, xi):
    """Largest over windows of ``xi`` consecutive reflections of the window minimum."""
    a = np.asarray(incidences, dtype=float)
    if a.size < xi:
        return None
    return float(max(a[i:i + xi].min() for i in range(a.size - xi + 1)))


def _closest_pairs(scene):
    from scipy.optimize import minimize

    chart = scene.chart
    out = []
    obs = scene.obstacles
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            a, b = obs[i], obs[j]
            da = a.sample_directions(48)
            db = b.sample_directions(48)
            best = min(((chart.distance(a.boundary_point(p), b.boundary_point(q)), p, q)
                        for p in da for q in db), key=lambda r: r[0])
            k = da.shape[1]
            res = minimize(lambda z: chart.distance(a.boundary_point(z[:k]), b.boundary_point(z[k:])),
                           np.concatenate([best[1], best[2]]), method="Nelder-Mead",
                           options=dict(xatol=1e-12, fatol=1e-14))
            out.append((a.boundary_point(res.x[:k]), b.boundary_point(res.x[k:])))
    return out


def near_periodic_sigma(scene, pair, rng):
    """Interior start near the bouncing orbit between two closest boundary points."""
    chart = scene.chart
    p, q = pair
    m = 0.5 * (p + q)
    v = chart.normalize(m, q - p)
    if rng.uniform() < 0.5:
        v = -v
    frame = complement_frame(chart, m, v)
    dx = 10 ** rng.uniform(-10, -1)
    dv = 10 ** rng.uniform(-10, -1)
    cx = rng.normal(size=len(frame))
    cv = rng.normal(size=len(frame))
    cx /= np.linalg.norm(cx)
    cv /= np.linalg.norm(cv)
    x = m + dx * (frame.T @ cx)
    w = v + dv * (frame.T @ cv)
    return PhasePoint(x, chart.normalize(x, w))


def reflection_window_rays(scene, xi, count, seed, limits=None, max_attempts=None,
                           tangency_tol=TANGENCY_TOL):
    """Incidence sequences of random rays having at least ``xi`` reflections.

    Half of the attempts start on ``T+dS`` with cosine-weighted angles, the
    other half near the bouncing orbits between closest obstacle pairs.
    Returns ``(sequences, attempts)``.
    """
    rng = np.random.default_rng(seed)
    limits = limits or Limits.for_scene(scene)
    max_attempts = max_attempts or 40 * count
    pairs = _closest_pairs(scene) if scene.d >= 2 else []
    eng = _Engine(scene)
    seqs = []
    attempts = 0
    L = scene.boundary.length if scene.dim == 2 else None
    while len(seqs) < count and attempts < max_attempts:
        attempts += 1
        if pairs and rng.uniform() < 0.5:
            sigma = near_periodic_sigma(scene, pairs[int(rng.integers(len(pairs)))], rng)
        elif scene.dim == 2:
            sigma = inward_sigma(scene, [rng.uniform(0, L)], math.asin(rng.uniform(-1, 1)))
        else:
            p = scene.S.sample_directions(1, rng)[0]
            sigma = inward_sigma(scene, p, math.asin(math.sqrt(rng.uniform())), rng.uniform(0, 2 * math.pi))
        traj = trace(scene, sigma, limits, tangency_tol, engine=eng)
        inc = [e.incidence_angle for e in traj.events if e.kind == REFLECTION]
        if len(inc) >= xi:
            seqs.append(inc)
    return seqs, attempts


def estimate_phi0(scene, xi, estimation):
    seqs, attempts = reflection_window_rays(scene, xi, estimation.rays, estimation.seed,
                                            max_attempts=estimation.rays * estimation.max_attempts_factor)
    if not seqs:
        return {"phi0": None, "rays_used": 0, "attempts": attempts}
    worst = max(window_statistic(s, xi) for s in seqs)
    phi0 = min(worst * (1.0 + estimation.phi0_margin), math.pi / 2 - 1e-9)
    return {"phi0": phi0, "rays_used": len(seqs), "attempts": attempts, "worst_window": worst}
