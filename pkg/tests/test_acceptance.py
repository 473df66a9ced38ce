"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one pass/fail line; the lines are printed in the
terminal summary (see ``conftest.py``) and also with ``-s``.
"""

import math
import time

import numpy as np
import pytest

from billiardlab import tutorial
from billiardlab.billiard import (REFLECTION, Limits, Sampler, TravelRecord, _Engine, eta_distance,
                                  reflection_window_rays, sampler_sigmas, step_to_event, trace,
                                  travelling_time)
from billiardlab.cli import DISTINGUISHABLE, INDISTINGUISHABLE, _tangency_equivalence, compare_scenes
from billiardlab.errors import NotComparableError
from billiardlab.fronts import (FrontState, body_front, front_collision_probe, front_separation_check,
                                propagate_front_patch, propagate_front_state, propagate_shape_operator,
                                random_tangent_data, reflect_shape_operator, reflection_jumps,
                                tangent_front_auto)
from billiardlab.geometry import PhasePoint, constant_curvature_chart, flat_chart
from billiardlab.scene import Scene, check_general_position, disc, kappa_min
from billiardlab.sceneio import scene_from_text

RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def constants():
    return {name: tutorial.load(name).constants() for name in tutorial.CONDITION1}


# ---------------------------------------------------------------------------

def _riccati_case(chart, k0, t):
    x = np.zeros(2)
    N = chart.normalize(x, np.array([1.0, 0.0]))
    E = chart.normalize(x, np.array([0.0, 1.0]))[None, :]
    return propagate_shape_operator(chart, FrontState(PhasePoint(x, N), E, [[k0]]), t).s[0, 0]


def _riccati_exact(c, k0, t):
    if c == 0:
        return k0 / (1 + k0 * t)
    if c > 0:
        return math.tan(math.atan(k0) - t)
    if abs(k0) < 1:
        return math.tanh(t + math.atanh(k0))
    return 1.0 / math.tanh(t + math.atanh(1.0 / k0))


def _riccati_draw(c, rng):
    # (k0, t) with the exact solution bounded by 20 over [0, t]
    while True:
        k0 = rng.uniform(-3, 3)
        t = rng.uniform(0.05, 2.5 if c > 0 else 5.0)
        ts = np.linspace(0, t, 200)
        try:
            ks = [_riccati_exact(c, k0, s) for s in ts]
        except (ValueError, ZeroDivisionError):
            continue
        if max(abs(k) for k in ks) <= 20 and all(np.sign(np.diff(ks)) <= 0):
            return k0, t


def test_criterion_1_riccati_oracle():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {}
    for c in (0.0, 1.0, -1.0):
        chart = flat_chart(2) if c == 0 else constant_curvature_chart(c, 2)
        err = 0.0
        for _ in range(100):
            k0, t = _riccati_draw(c, rng)
            err = max(err, abs(_riccati_case(chart, k0, t) - _riccati_exact(c, k0, t)))
        worst[c] = err
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and dt < 10
    report(1, ok, f"max |k - k_exact| flat {worst[0.0]:.2e}, sphere {worst[1.0]:.2e}, "
                  f"hyperbolic {worst[-1.0]:.2e} (tol 1e-6); runtime {dt:.1f} s (limit 10 s)")


def _front_runs(constants, fronts_per_scene=4, seed=5):
    """Tangent fronts on every condition-(1) scene propagated through up to 50 reflections."""
    rng = np.random.default_rng(seed)
    runs = []
    for name in tutorial.CONDITION1:
        sc = tutorial.load(name)
        km = constants[name].kappa_min
        for _ in range(fronts_per_scene):
            k, x0, V = random_tangent_data(sc, rng)
            patch = tangent_front_auto(sc, x0, V, km, samples=5 if sc.dim == 2 else 3, obstacle=k)
            _, log = propagate_front_patch(sc, patch, max_reflections=50)
            runs.append((name, km, log))
        # near-periodic fronts: a small circle between the closest pair reflects many times
        c = 0.5 * (sc.obstacles[0].center + sc.obstacles[1].center)
        body = disc(c, 0.05) if sc.dim == 2 else None
        if body is not None:
            d = sc.obstacles[1].center - sc.obstacles[0].center
            a = math.atan2(d[1], d[0])
            patch = body_front(sc.chart, body, a + np.linspace(-1e-9, 1e-9, 3))
            _, log = propagate_front_patch(sc, patch, max_reflections=50)
            runs.append((name, km, log))
    return runs


@pytest.fixture(scope="module")
def front_runs(constants):
    return _front_runs(constants)


def test_criterion_2_mirror_equation(front_runs):
    chart = flat_chart(2)
    err = 0.0
    for phi in np.arange(0.0, 1.4 + 1e-9, 0.1):
        for kap in (0.5, 1.0, 2.0):
            for km in (0.0, 0.7):
                N = np.array([math.cos(phi), math.sin(phi)])
                f = FrontState(PhasePoint(np.array([-1.0, 0.0]), N), [[-N[1], N[0]]], [[km]])
                out = reflect_shape_operator(chart, f, np.array([[kap]]), np.array([[0.0, 1.0]]),
                                             np.array([-1.0, 0.0]))
                err = max(err, abs(out.s[0, 0] - (km + 2 * kap / math.cos(phi))))
    margins = []
    for _, km, log in front_runs:
        margins += reflection_jumps(log, km)
    worst = min(margins)
    ok = err <= 1e-8 and worst >= -1e-9
    report(2, ok, f"mirror-equation error {err:.2e} (tol 1e-8); jump inequality on {len(margins)} "
                  f"reflections, smallest margin k+ - (k- + 2 kappa_min cos phi) = {worst:.3e}")


def test_criterion_3_exact_scenes():
    sc = Scene(flat_chart(2), disc((0, 0), 5), [disc((0, 0), 1)], name="disc5-unit")
    t_back = trace(sc, PhasePoint(np.array([-5.0, 0.0]), np.array([1.0, 0.0]))).total_time
    ev = step_to_event(sc, PhasePoint(np.array([-5.0, 1.0]), np.array([1.0, 0.0])), 100.0,
                       tangency_tol=1e-6)
    ok = abs(t_back - 8.0) <= 1e-7 and ev.kind == "tangency" and np.linalg.norm(ev.state_before.x - [0, 1]) < 1e-6
    report(3, ok, f"axial bounce-back t = {t_back:.12f} (|t-8| = {abs(t_back - 8):.1e}); grazing ray "
                  f"-> {ev.kind} at ({ev.state_before.x[0]:.2e}, {ev.state_before.x[1]:.9f})")


def test_criterion_4_conservation_reciprocity():
    sc = tutorial.load("two-disc")
    limits = Limits.for_scene(sc)
    eng = _Engine(sc)
    sig = sampler_sigmas(sc, Sampler("random", 10 ** 4, seed=4))
    speed = specular = dx = dt = 0.0
    n_rec = 0
    for s in sig:
        tr = trace(sc, s, limits, engine=eng)
        for e in tr.events:
            speed = max(speed, abs(np.linalg.norm(e.state_before.v) - 1), abs(np.linalg.norm(e.state_after.v) - 1))
            if e.kind == REFLECTION:
                N = e.normal
                vb, va = e.state_before.v, e.state_after.v
                specular = max(specular, abs(va @ N + vb @ N),
                               np.linalg.norm((va - (va @ N) * N) - (vb - (vb @ N) * N)))
        rec = travelling_time(sc, s, limits)
        if not isinstance(rec, TravelRecord):
            continue
        back = travelling_time(sc, PhasePoint(rec.y_point, -rec.exit_velocity), limits)
        n_rec += 1
        dx = max(dx, np.linalg.norm(back.y_point - rec.x_point))
        dt = max(dt, abs(back.t - rec.t))
    ok = speed <= 1e-8 and specular <= 1e-8 and dx <= 1e-6 and dt <= 1e-7
    report(4, ok, f"{len(sig)} rays: speed drift {speed:.1e}, specular defect {specular:.1e}; "
                  f"{n_rec} reversed rays: entry error {dx:.1e}, time error {dt:.1e}")


def test_criterion_5_convexity_persistence(constants, front_runs):
    lines = []
    ok = True
    for name in tutorial.CONDITION1:
        theta = constants[name].theta
        logs = [log for n, _, log in front_runs if n == name]
        mins = [lg.min_eig for log in logs for lg in log["samples"] if lg is not None and lg.status == "ok"]
        post = [r["kmin_after"] for log in logs for lg in log["samples"] if lg is not None
                for r in lg.reflections]
        refl = max(len(lg.reflections) for log in logs for lg in log["samples"] if lg is not None)
        m = min(mins)
        ok = ok and m > 0 and m >= 0.5 * theta
        lines.append(f"{name}: min k {m:.3f} vs 0.5*Theta {0.5 * theta:.3f}, "
                     f"post-reflection floor {min(post) if post else float('nan'):.3f}, "
                     f"max reflections {refl}")
    report(5, ok, "; ".join(lines))


def _separation_pairs(name, pairs, rng, t_scale):
    sc = tutorial.load(name)
    km = kappa_min(sc)
    done = violations = incomparable = with_refl = 0
    worst = math.inf
    while done < pairs:
        k, x0, V = random_tangent_data(sc, rng)
        patch = tangent_front_auto(sc, x0, V, km, samples=3 if sc.dim == 3 else 5, obstacle=k)
        eps = patch.meta["eps"]
        for _ in range(5):
            u0 = rng.uniform(-eps / 2, eps / 2, sc.dim - 1)
            u1 = rng.uniform(-eps / 2, eps / 2, sc.dim - 1)
            t = rng.uniform(0.0, t_scale)
            try:
                r = front_separation_check(sc, patch, u0, u1, t, samples=9)
            except NotComparableError:
                incomparable += 1
                continue
            done += 1
            with_refl += r.reflections > 0
            violations += not r.passed
            worst = min(worst, r.ratio)
            if done == pairs:
                break
    return done, violations, incomparable, with_refl, worst


def test_criterion_6_separation_bound():
    rng = np.random.default_rng(6)
    lines, ok = [], True
    for name in tutorial.CONDITION1:
        sc = tutorial.load(name)
        n, v, inc, wr, worst = _separation_pairs(name, 100, rng, 0.6 * sc.D)
        ok = ok and v == 0
        lines.append(f"{name}: {n} pairs, {v} violations, {wr} across reflections, "
                     f"min d_Xt/bound {worst:.3f}, {inc} redrawn")
    report(6, ok, "; ".join(lines))


def test_criterion_8_trapped_coding():
    sc = tutorial.load("two-disc")
    circle = disc((0, 0), 0.5)
    base = body_front(sc.chart, circle, [0.0]).states[0]
    lines, ok = [], True
    for N in range(2, 11):
        # largest delta (halving) whose itinerary agrees with the axial ray for N reflections
        delta = 0.1
        while True:
            fs = body_front(sc.chart, circle, [delta]).states[0]
            _, lg = propagate_front_state(sc, fs, max_reflections=N)
            if len(lg.reflections) == N and [r["body"] for r in lg.reflections] == [2, 1] * (N // 2) + [2] * (N % 2):
                break
            delta *= 0.5
        _, lg0 = propagate_front_state(sc, base, max_reflections=N)
        t_N = max(lg.reflections[-1]["t"], lg0.reflections[-1]["t"]) + 0.1
        patch = body_front(sc.chart, circle, [0.0, delta])
        r = front_separation_check(sc, patch, 0.0, delta, t_N, samples=17)
        C = r.d_Xt
        bound = C * math.exp(-t_N * r.k_min)
        good = r.reflections == N and r.d_X < bound
        ok = ok and good
        lines.append(f"N={N}: d_X {r.d_X:.2e} < C e^(-t_N k_min) {bound:.2e}")
    rng = np.random.default_rng(8)
    metric_ok = True
    for _ in range(1000):
        a, b, c = (tuple(rng.integers(1, 3, rng.integers(0, 15))) for _ in range(3))
        ab, ba = eta_distance(a, b), eta_distance(b, a)
        metric_ok &= ab == ba and (ab == 0) == (a == b) and eta_distance(a, a) == 0
        metric_ok &= ab <= eta_distance(a, c) + eta_distance(c, b) + 1e-15
    ok = ok and metric_ok
    report(8, ok, "; ".join(lines) + f"; eta metric on 1000 triples: {'ok' if metric_ok else 'violated'}")


def test_criterion_7_collision():
    ch, X, Y, xr, yr = tutorial.collision_probe("two-circle")
    two = front_collision_probe(ch, X, Y, xr, yr)
    ch, X, Y, xr, yr = tutorial.collision_probe("concentric")
    con = front_collision_probe(ch, X, Y, xr, yr)
    ok = (len(two.roots) == 1 and not two.discreteness_violated and two.separation_radii[0] >= 0.1
          and con.discreteness_violated)
    report(7, ok, f"two-circle roots {['%.2e' % r for r in two.roots]}, separation radius "
                  f"{two.separation_radii[0] if two.separation_radii else float('nan'):.4f}; "
                  f"concentric discreteness violated = {con.discreteness_violated}")


def test_criterion_9_uniqueness_probe():
    t0 = time.perf_counter()
    K = tutorial.load("two-disc")
    same = compare_scenes(K, tutorial.load("two-disc"), Sampler("grid", 10 ** 4))
    L = tutorial.load("two-disc-shifted")
    sampler = Sampler("grid", 10 ** 4)
    shifted = compare_scenes(K, L, sampler)
    sig = sampler_sigmas(K, sampler)
    axial = [p["discrepancy"] for p, s in zip(shifted.per_ray, sig)
             if abs(s.x[1]) < 1e-12 and abs(abs(s.v[0]) - 1) < 1e-12]
    # general position pair: move one disc of three-disc so that many rays never see it
    A = tutorial.load("three-disc")
    B = scene_from_text(tutorial.scene_text("three-disc").replace(
        "center: [-1.25, -2.1650635094610964]", "center: [-1.25, -1.8650635094610964]"))
    gp = check_general_position(A, 2000).passed and check_general_position(B, 2000).passed
    gen = compare_scenes(A, B, Sampler("random", 10 ** 4, seed=9))
    shared = sum(1 for p in gen.per_ray if p["discrepancy"] <= 1e-7)
    sing_ok = gen.verdict == DISTINGUISHABLE or all(s["equivalent"] for s in gen.singular)
    # random rays are almost never singular at the 1e-6 threshold, so add rays
    # that graze the unmoved disc at (2.5, 0) along the lines y = +-0.8
    built = []
    for side in (-1.0, 1.0):
        for y in (-0.8, 0.8):
            x = np.array([side * math.sqrt(36.0 - y * y), y])
            sigma = PhasePoint(x, np.array([-side, 0.0]))
            ta, tb = trace(A, sigma), trace(B, sigma)
            built.append(ta.singular and tb.singular and _tangency_equivalence(A, B, sigma, ta, tb)["equivalent"])
    dt = time.perf_counter() - t0
    ok = (same.max_discrepancy <= 1e-7 and same.verdict == INDISTINGUISHABLE and axial and max(axial) >= 0.9
          and gp and sing_ok and all(built) and dt < 300)
    report(9, ok, f"K vs K max {same.max_discrepancy:.1e}; K vs shifted: axial discrepancies "
                  f"{['%.6f' % a for a in axial]}; general-position pair: {shared}/{gen.compared} shared "
                  f"times, {len(gen.singular)} singular sampled rays, verdict '{gen.verdict}', "
                  f"{sum(built)}/{len(built)} constructed grazing rays equivalent up to tangency; "
                  f"runtime {dt:.0f} s")


def test_criterion_10_reflection_window(constants):
    lines, ok = [], True
    for name in tutorial.CONDITION1:
        sc = tutorial.load(name)
        c = constants[name]
        xi, phi0 = c.xi, c.phi0
        # independent of the estimation batch, which uses the scene seed
        seqs, _ = reflection_window_rays(sc, xi, 2000, seed=sc.estimation.seed + 1)
        bad = sum(1 for s in seqs for i in range(len(s) - xi + 1) if min(s[i:i + xi]) >= phi0)
        ok = ok and bad == 0
        lines.append(f"{name}: xi {xi}, phi0 {phi0:.3e}, {len(seqs)} rays, {bad} windows >= phi0")
    report(10, ok, "; ".join(lines))
