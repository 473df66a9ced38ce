import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from billiardlab import tutorial
from billiardlab.errors import ConstructionFailedError, FocalPointError, GrazingError, NotComparableError
from billiardlab.fronts import (FrontState, body_front, construct_tangent_front, front_collision_probe,
                                front_separation_check, propagate_front_patch, propagate_front_state,
                                propagate_shape_operator, reflect_shape_operator, reflection_jumps,
                                tangent_front_auto)
from billiardlab.geometry import PhasePoint, constant_curvature_chart, flat_chart
from billiardlab.scene import Scene, disc, kappa_min


def front(chart, x, N, E, s):
    x = np.asarray(x, float)
    N = chart.normalize(x, np.asarray(N, float))
    E = np.array([chart.normalize(x, np.asarray(e, float)) for e in E])
    return FrontState(PhasePoint(x, N), E, np.asarray(s, float))


def test_riccati_flat():
    ch = flat_chart(2)
    out = propagate_shape_operator(ch, front(ch, [0, 0], [1, 0], [[0, 1]], [[1.0]]), 1.0)
    assert out.s[0, 0] == pytest.approx(0.5, abs=1e-10)
    assert np.allclose(out.x, [1, 0], atol=1e-12) and out.t == 1.0


def test_riccati_flat_3d():
    ch = flat_chart(3)
    out = propagate_shape_operator(ch, front(ch, [0, 0, 0], [0, 0, 1], [[1, 0, 0], [0, 1, 0]],
                                             np.diag([1.0, 2.0])), 1.0)
    assert np.allclose(out.principal_curvatures(), [0.5, 2 / 3], atol=1e-10)


def test_riccati_sphere():
    ch = constant_curvature_chart(1.0, 2)
    out = propagate_shape_operator(ch, front(ch, [0, 0], [1, 0], [[0, 1]], [[1.0]]), 0.5)
    assert out.s[0, 0] == pytest.approx(math.tan(math.pi / 4 - 0.5), abs=1e-9)


def test_riccati_hyperbolic_fixed_point():
    ch = constant_curvature_chart(-1.0, 2)
    out = propagate_shape_operator(ch, front(ch, [0, 0], [1, 0], [[0, 1]], [[2.0]]), 5.0)
    assert out.s[0, 0] == pytest.approx(1.0, abs=1e-4)
    exact = 1.0 / math.tanh(5.0 + math.atanh(0.5))
    assert out.s[0, 0] == pytest.approx(exact, abs=1e-8)


def test_focal_point():
    ch = flat_chart(2)
    with pytest.raises(FocalPointError) as exc:
        propagate_shape_operator(ch, front(ch, [0, 0], [1, 0], [[0, 1]], [[-1.0]]), 2.0)
    assert exc.value.t_focal == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("phi,expected", [(0.0, 2.0), (math.pi / 3, 4.0)])
def test_mirror_equation(phi, expected):
    ch = flat_chart(2)
    x = np.array([-1.0, 0.0])
    N = np.array([math.cos(phi), math.sin(phi)])
    f = front(ch, x, N, [[-N[1], N[0]]], [[0.0]])
    out = reflect_shape_operator(ch, f, np.array([[1.0]]), np.array([[0.0, 1.0]]), np.array([-1.0, 0.0]))
    assert out.s[0, 0] == pytest.approx(expected, abs=1e-12)
    assert np.allclose(out.N, [-math.cos(phi), math.sin(phi)], atol=1e-15)


def test_mirror_equation_general():
    # k+ = k- + 2 kappa / cos(phi) in the plane
    ch = flat_chart(2)
    rng = np.random.default_rng(3)
    for _ in range(50):
        phi = rng.uniform(-1.4, 1.4)
        km, kap = rng.uniform(-1, 3), rng.uniform(0.1, 3)
        N = np.array([math.cos(phi), math.sin(phi)])
        f = front(ch, [-1, 0], N, [[-N[1], N[0]]], [[km]])
        out = reflect_shape_operator(ch, f, np.array([[kap]]), np.array([[0.0, 1.0]]), np.array([-1.0, 0.0]))
        assert out.s[0, 0] == pytest.approx(km + 2 * kap / math.cos(phi), rel=1e-12)


def test_jump_law_3d_normal_incidence():
    ch = flat_chart(3)
    f = front(ch, [0, 0, -1], [0, 0, 1], [[1, 0, 0], [0, 1, 0]], np.diag([0.5, 1.0]))
    out = reflect_shape_operator(ch, f, np.eye(2), np.array([[1.0, 0, 0], [0, 1.0, 0]]),
                                 np.array([0.0, 0.0, -1.0]))
    assert np.allclose(out.principal_curvatures(), [2.5, 3.0], atol=1e-12)


def test_grazing_error():
    ch = flat_chart(2)
    f = front(ch, [-1, 0], [0, 1], [[-1, 0]], [[0.0]])
    with pytest.raises(GrazingError):
        reflect_shape_operator(ch, f, np.array([[1.0]]), np.array([[0.0, 1.0]]), np.array([-1.0, 0.0]))


def test_expanding_circle(empty_disc):
    ch = empty_disc.chart
    patch = body_front(ch, disc((0, 0), 1), np.linspace(-np.pi, np.pi, 24, endpoint=False))
    out, log = propagate_front_patch(empty_disc, patch, t_end=1.0)
    assert not log["holes"]
    for st in out.states:
        assert np.linalg.norm(st.x) == pytest.approx(2.0, abs=1e-10)
        assert st.s[0, 0] == pytest.approx(0.5, abs=1e-9)
    assert log["min_eig"] == pytest.approx(0.5, abs=1e-9)


def test_tangent_front_unit_circle(disc5_unit):
    eps = 0.1
    patch = construct_tangent_front(disc5_unit, np.array([1.0, 0.0]), np.array([0.0, 1.0]), eps)
    mid = len(patch) // 2
    assert patch.params[mid, 0] == 0.0
    st = patch.states[mid]
    assert np.allclose(st.x, [1.0, 0.1], atol=1e-10)
    assert np.allclose(st.N, [0.0, 1.0], atol=1e-10)
    for u, s in zip(patch.params[:, 0], patch.states):
        assert s.s[0, 0] == pytest.approx(1.0 / (eps - u), rel=1e-6)
        # the backward normal ray grazes the unit circle
        foot = s.x - (eps - u) * s.N
        assert np.linalg.norm(foot) == pytest.approx(1.0, abs=1e-9)
        assert abs(foot @ s.N) < 1e-8


def test_tangent_front_rejects_large_eps(disc5_unit):
    with pytest.raises(ConstructionFailedError):
        construct_tangent_front(disc5_unit, np.array([1.0, 0.0]), np.array([0.0, 1.0]), 20.0)


def test_tangent_front_3d():
    sc = tutorial.load("three-ball")
    k = sc.obstacles[0]
    x0 = k.boundary_point(np.array([1.0, 0.3]))
    from billiardlab.bodies import outward_normal
    from billiardlab.geometry import complement_frame
    N, _ = outward_normal(sc.chart, k, x0)
    V = complement_frame(sc.chart, x0, N)[0]
    patch = tangent_front_auto(sc, x0, V, kappa_min(sc), samples=3)
    assert len(patch) == 9 and patch.min_curvature() > 0


def test_separation_expanding_circle(empty_disc):
    patch = body_front(empty_disc.chart, disc((0, 0), 1), np.linspace(-0.2, 0.3, 6))
    rep = front_separation_check(empty_disc, patch, 0.0, 0.1, 1.0)
    assert rep.d_X == pytest.approx(0.1, abs=1e-6)
    assert rep.d_Xt == pytest.approx(0.2, abs=1e-6)
    assert rep.k_min == pytest.approx(0.5, abs=1e-9)
    assert rep.bound == pytest.approx(0.1 * math.exp(0.5), abs=1e-6)
    assert rep.passed
    rep0 = front_separation_check(empty_disc, patch, 0.0, 0.1, 0.0)
    assert rep0.d_Xt == rep0.d_X == rep0.bound and rep0.passed


def test_separation_across_reflection(two_disc):
    patch = body_front(two_disc.chart, disc((0, 0), 0.5), np.linspace(-0.1, 0.1, 5))
    rep = front_separation_check(two_disc, patch, 0.0, 0.05, 2.0, samples=17)
    assert rep.reflections == 1 and rep.itinerary == (2,)
    assert rep.t_n == pytest.approx(0.5, abs=1e-3)
    assert rep.passed
    # cross-check with the Jacobi-field norm |J(t)| = |J(0)| exp(int k) per sample
    us = np.linspace(0.0, 0.05, 17)
    growth = []
    for u in us:
        fs = body_front(two_disc.chart, disc((0, 0), 0.5), [u]).states[0]
        _, lg = propagate_front_state(two_disc, fs, t_end=2.0)
        ts = np.array([a for a, _ in lg.series])
        ks = np.array([b for _, b in lg.series])
        growth.append(np.exp(np.sum(0.5 * (ks[1:] + ks[:-1]) * np.diff(ts))))
    jac = 0.5 * trapezoid(growth, us)
    assert rep.d_Xt == pytest.approx(jac, rel=2e-2)


def test_separation_mixed_itinerary(two_disc):
    patch = body_front(two_disc.chart, disc((0, 0), 0.5), np.linspace(0, np.pi, 5))
    with pytest.raises(NotComparableError):
        front_separation_check(two_disc, patch, 0.0, np.pi, 2.0)


def test_reflection_jumps_nonnegative(two_disc):
    km = kappa_min(two_disc)
    patch = construct_tangent_front(two_disc, np.array([2.0, 1.0]), np.array([-1.0, 0.0]), 0.05, samples=5)
    _, log = propagate_front_patch(two_disc, patch, max_reflections=10)
    jumps = reflection_jumps(log, km)
    assert jumps and min(jumps) >= -1e-8
    for lg in log["samples"]:
        assert lg.min_eig > 0


def test_collision_two_circles():
    ch, X, Y, xr, yr = tutorial.collision_probe("two-circle")
    rep = front_collision_probe(ch, X, Y, xr, yr)
    assert not rep.discreteness_violated
    assert len(rep.roots) == 1 and rep.roots[0] == pytest.approx(0.0, abs=1e-9)
    assert rep.separation_radii[0] >= 0.1
    c = rep.curvatures[0]
    assert c["k_X"] == pytest.approx(1.0, abs=1e-6) and c["k_Y"] == pytest.approx(-1.0, abs=1e-6)
    assert c["hypothesis"]


def test_collision_off_axis():
    ch, X, Y, xr, yr = tutorial.collision_probe("off-axis")
    rep = front_collision_probe(ch, X, Y, xr, yr)
    assert len(rep.roots) == 1
    assert rep.roots[0] == pytest.approx(math.atan(0.3), abs=1e-9)


def test_collision_concentric():
    ch, X, Y, xr, yr = tutorial.collision_probe("concentric")
    rep = front_collision_probe(ch, X, Y, xr, yr)
    assert rep.discreteness_violated
    assert rep.curvatures and all(c["k_Y"] > 0 and not c["hypothesis"] for c in rep.curvatures)
