"""Command-line interface: ``billiardlab {travel,compare,constants,fronts,trace}``.

Exit codes: 0 success, 2 scene error, 3 numerical error, 4 when ``compare``
finds the two scenes distinguishable.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__, output
from .billiard import (TANGENCY_TOL, Limits, Sampler, TravelRecord, _Engine, sample_travel_times,
                       sampler_sigmas, trace, travelling_time)
from .errors import IncomparableScenesError, NumericalError, SceneError
from .fronts import (body_front, front_separation_check, min_eig_series, propagate_front_patch,
                     random_tangent_data, reflection_jumps, tangent_front_auto, construct_tangent_front)
from .bodies import disc, ball
from .geometry import PhasePoint
from .scene import kappa_min
from .sceneio import load_scene

EXIT_OK = 0
EXIT_SCENE = 2
EXIT_NUMERICAL = 3
EXIT_DISTINGUISHABLE = 4

INDISTINGUISHABLE = "indistinguishable at tolerance"
DISTINGUISHABLE = "distinguishable"


# ---------------------------------------------------------------------------
# comparison

@dataclass
class ComparisonReport:
    max_discrepancy: float
    mean_discrepancy: float
    hausdorff: float
    trapped_disagreement: int
    compared: int
    singular: list = field(default_factory=list)
    per_ray: list = field(default_factory=list)
    verdict: str = INDISTINGUISHABLE
    tolerance: float = 1e-7

    def as_dict(self, per_ray=False):
        d = {
            "max_discrepancy": self.max_discrepancy, "mean_discrepancy": self.mean_discrepancy,
            "hausdorff": self.hausdorff, "trapped_disagreement": self.trapped_disagreement,
            "compared": self.compared, "singular": self.singular, "verdict": self.verdict,
            "tolerance": self.tolerance,
            "singular_all_equivalent": all(s["equivalent"] for s in self.singular),
        }
        if per_ray:
            d["per_ray"] = self.per_ray
        return d


def check_comparable(a, b, probes=64):
    ca, cb = a.chart, b.chart
    if (ca.kind, ca.dim, getattr(ca, "c", None)) != (cb.kind, cb.dim, getattr(cb, "c", None)):
        raise IncomparableScenesError("scenes use different charts")
    for p, q in ((a, b), (b, a)):
        pts = p.S.sample_boundary(probes) if hasattr(p.S, "sample_boundary") else None
        for x in pts:
            if abs(q.S.psi(x)) > 1e-9:
                raise IncomparableScenesError("scenes have different exterior bodies S")


def _tangency_equivalence(scene_a, scene_b, sigma, ta, tb, checkpoints=100, tol=1e-6):
    stars = [t.first_tangency_time() for t in (ta, tb)]
    stars = [s for s in stars if s is not None]
    t_star = min(stars)
    t_star = min(t_star, ta.total_time, tb.total_time)
    worst = 0.0
    for t in np.linspace(0.0, t_star, checkpoints):
        pa = ta.position_at(scene_a.chart, t)
        pb = tb.position_at(scene_b.chart, t)
        worst = max(worst, scene_a.chart.distance(pa, pb))
    return {"t_star": t_star, "max_deviation": worst, "equivalent": bool(worst <= tol)}


def compare_scenes(scene_a, scene_b, sampler: Sampler, limits=None, tangency_tol=TANGENCY_TOL,
                   tolerance=1e-7) -> ComparisonReport:
    """Trace the same inward sample through both scenes and pair results by ray."""
    check_comparable(scene_a, scene_b)
    limits = limits or Limits.for_scene(scene_a)
    sig = sampler_sigmas(scene_a, sampler)
    ea, eb = _Engine(scene_a), _Engine(scene_b)
    diffs, per_ray, singular = [], [], []
    pts_a, pts_b = [], []
    trapped_dis = 0
    for i, s in enumerate(sig):
        ta = trace(scene_a, s, limits, tangency_tol, engine=ea)
        tb = trace(scene_b, s, limits, tangency_tol, engine=eb)
        if ta.exited != tb.exited:
            trapped_dis += 1
            per_ray.append({"index": i, "discrepancy": math.inf})
        elif ta.exited:
            ya, yb = ta.events[-1].state_before.x, tb.events[-1].state_before.x
            dt = abs(ta.total_time - tb.total_time)
            diffs.append(dt)
            pts_a.append(np.concatenate([s.x, ya, [ta.total_time]]))
            pts_b.append(np.concatenate([s.x, yb, [tb.total_time]]))
            per_ray.append({"index": i, "discrepancy": dt, "exit_gap": float(np.linalg.norm(ya - yb)),
                            "t_a": ta.total_time, "t_b": tb.total_time})
        if ta.singular or tb.singular:
            rep = _tangency_equivalence(scene_a, scene_b, s, ta, tb)
            rep["index"] = i
            singular.append(rep)
    maxd = max(diffs) if diffs else 0.0
    meand = float(np.mean(diffs)) if diffs else 0.0
    haus = _hausdorff(np.array(pts_a), np.array(pts_b)) if pts_a else 0.0
    dist = maxd > tolerance or trapped_dis > 0
    return ComparisonReport(maxd, meand, haus, trapped_dis, len(sig), singular, per_ray,
                            DISTINGUISHABLE if dist else INDISTINGUISHABLE, tolerance)


def _hausdorff(A, B):
    from scipy.spatial import cKDTree
    da, _ = cKDTree(B).query(A)
    db, _ = cKDTree(A).query(B)
    return float(max(da.max(), db.max()))


# ---------------------------------------------------------------------------
# commands

def _limits(scene, args):
    return Limits.for_scene(scene, args.t_max, args.max_reflections)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scene(args, key="scene"):
    sc = load_scene(getattr(args, key))
    if getattr(args, "cond2_variant", False):
        sc.estimation = replace(sc.estimation, cond2_variant=True)
    return sc


def cmd_travel(args):
    scene = _scene(args)
    limits = _limits(scene, args)
    sampler = Sampler(args.sampler, args.samples, args.seed)
    res = sample_travel_times(scene, sampler, limits, args.tangency_tol, workers=args.workers)
    out = _outdir(args)
    output.write_csv(out / "travel.csv", output.travel_header(scene.dim), output.travel_rows(res.records),
                     scene.source_hash, args.seed)
    meta = {"scene": scene.name, "stats": res.stats,
            "constants": {"D": scene.D, "d_min": scene.d_min, "xi": scene.xi()}}
    output.write_json(out / "travel.json", meta, scene.source_hash, args.seed)
    print(json.dumps({"rows": len(res.records), "trapped": res.stats["trapped"],
                      "singular": res.stats["singular"], "out": str(out)}))
    return EXIT_OK


def cmd_compare(args):
    a = _scene(args, "scene")
    b = _scene(args, "scene_b")
    limits = _limits(a, args)
    sampler = Sampler(args.sampler, args.samples, args.seed)
    rep = compare_scenes(a, b, sampler, limits, args.tangency_tol, args.tolerance)
    doc = {"scene_a": a.name, "scene_b": b.name, "scene_b_sha256": b.source_hash, **rep.as_dict()}
    if args.out:
        out = _outdir(args)
        output.write_json(out / "compare.json", {**doc, "per_ray": rep.per_ray}, a.source_hash, args.seed)
    print(json.dumps(output._jsonable(doc), sort_keys=True))
    return EXIT_DISTINGUISHABLE if rep.verdict == DISTINGUISHABLE else EXIT_OK


def cmd_constants(args):
    scene = _scene(args)
    est = scene.estimation
    if args.seed is not None:
        est = replace(est, seed=args.seed)
    c = scene.constants(est)
    doc = {"scene": scene.name, **c.as_dict()}
    if args.out:
        out = _outdir(args)
        output.write_json(out / "constants.json", doc, scene.source_hash, est.seed)
    print(json.dumps(output._jsonable(doc), sort_keys=True))
    return EXIT_OK


def _front_patch(scene, args, rng):
    if args.front == "circle":
        center = np.asarray(args.center, dtype=float)
        body = disc(center, args.radius) if scene.dim == 2 else ball(center, args.radius)
        if scene.dim == 2:
            params = np.linspace(args.u_min, args.u_max, args.front_samples)
        else:
            a = np.linspace(args.u_min, args.u_max, args.front_samples)
            params = np.array([[math.pi / 2 + p, q] for p in a for q in a])
        return body_front(scene.chart, body, params, 1.0)
    kappa = kappa_min(scene) if args.eps is None else None
    if args.x0 is not None:
        x0 = np.asarray(args.x0, dtype=float)
        V = np.asarray(args.V, dtype=float)
        if args.eps is not None:
            return construct_tangent_front(scene, x0, V, args.eps, samples=args.front_samples)
        return tangent_front_auto(scene, x0, V, kappa, samples=args.front_samples)
    k, x0, V = random_tangent_data(scene, rng)
    if args.eps is not None:
        return construct_tangent_front(scene, x0, V, args.eps, samples=args.front_samples, obstacle=k)
    return tangent_front_auto(scene, x0, V, kappa, samples=args.front_samples, obstacle=k)


def cmd_fronts(args):
    scene = _scene(args)
    rng = np.random.default_rng(args.seed)
    patch = _front_patch(scene, args, rng)
    t_end = args.t_max if args.t_max is not None else 2.0 * scene.D
    times = np.linspace(0.0, t_end, args.checkpoints + 1)
    end, log = propagate_front_patch(scene, patch, t_end, args.max_reflections, checkpoints=tuple(times))
    series = min_eig_series(log, times)
    jumps = reflection_jumps(log, kappa_min(scene)) if log["reflections"] else []
    sep = None
    if scene.dim == 2 and len(patch.params) >= 2 and patch.generator is not None:
        u0, u1 = patch.params[0], patch.params[-1]
        try:
            r = front_separation_check(scene, patch, u0, u1, min(1.0, t_end))
            sep = {k: getattr(r, k) for k in ("d_X", "d_Xt", "k_min", "k_min_final", "t_n", "bound",
                                              "bound_final_reading", "passed", "reflections")}
        except NumericalError as exc:
            sep = {"error": str(exc)}
    out = _outdir(args)
    output.write_csv(out / "front_start.csv", output.front_header(scene.dim), output.front_rows(patch),
                     scene.source_hash, args.seed)
    output.write_csv(out / "front_end.csv", output.front_header(scene.dim), output.front_rows(end),
                     scene.source_hash, args.seed)
    output.write_csv(out / "min_eig.csv", ["t", "min_eig"], zip(times, series), scene.source_hash, args.seed)
    doc = {"scene": scene.name, "provenance": patch.provenance, "min_eig": log["min_eig"],
           "holes": log["holes"], "reflections": log["reflections"],
           "reflection_margin_min": min(jumps) if jumps else None, "separation": sep}
    output.write_json(out / "fronts.json", doc, scene.source_hash, args.seed)
    if scene.dim == 2:
        line = [s.x for s in patch.states if s is not None]
        rays = []
        for s in patch.states[:: max(1, len(patch.states) // 5)]:
            if s is not None:
                tr = trace(scene, PhasePoint(s.x, s.N), Limits(t_end, args.max_reflections))
                rays.append([s.x] + [e.state_before.x for e in tr.events] +
                            ([] if tr.exited else [tr.position_at(scene.chart, tr.total_time)]))
        svg = output.scene_svg(scene, [line], rays, scene.source_hash, args.seed)
        output.write_text(out / "fronts.svg", svg)
    print(json.dumps(output._jsonable(doc), sort_keys=True))
    return EXIT_OK


def cmd_trace(args):
    scene = _scene(args)
    limits = _limits(scene, args)
    if args.x is not None:
        x = np.asarray(args.x, dtype=float)
        v = scene.chart.normalize(x, np.asarray(args.v, dtype=float))
        sigma = PhasePoint(x, v)
    else:
        from .billiard import inward_sigma
        sigma = inward_sigma(scene, [args.s], args.alpha)
    tr = trace(scene, sigma, limits, args.tangency_tol)
    for e in tr.events:
        print(json.dumps(output._jsonable({
            "kind": e.kind, "t": e.t, "x": e.state_before.x, "v_before": e.state_before.v,
            "v_after": e.state_after.v, "body": e.body, "incidence": e.incidence_angle})))
    print(json.dumps(output._jsonable({"status": tr.status, "exited": tr.exited,
                                       "total_time": tr.total_time, "reflections": tr.reflections,
                                       "tangencies": tr.tangencies, "cutoff": tr.cutoff_reason})))
    if not tr.exited:
        return EXIT_OK
    rec = travelling_time(scene, sigma, limits, args.tangency_tol)
    if isinstance(rec, TravelRecord):
        print(json.dumps(output._jsonable({"entry": rec.x, "exit": rec.y, "t": rec.t})))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _vec(text):
    return [float(t) for t in text.split(",")]


def build_parser():
    p = argparse.ArgumentParser(prog="billiardlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"billiardlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scene_b=False):
        sp.add_argument("--config", help="YAML file with option values (keys as option names)")
        sp.add_argument("--scene", required=False, help="scene YAML file")
        if scene_b:
            sp.add_argument("--scene-b", help="second scene YAML file")
        sp.add_argument("--t-max", type=float, default=None)
        sp.add_argument("--max-reflections", type=int, default=None)
        sp.add_argument("--tangency-tol", type=float, default=TANGENCY_TOL)
        sp.add_argument("--cond2-variant", action="store_true")
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("travel", help="sample travelling times")
    common(sp)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--sampler", choices=("grid", "random"), default="random")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_travel, out="out")

    sp = sub.add_parser("compare", help="compare travelling times of two scenes")
    common(sp, scene_b=True)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--sampler", choices=("grid", "random"), default="grid")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tolerance", type=float, default=1e-7)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("constants", help="global constants and curvature condition")
    common(sp)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("fronts", help="construct and propagate a convex front")
    common(sp)
    sp.add_argument("--front", choices=("tangent", "circle"), default="tangent")
    sp.add_argument("--x0", type=_vec, default=None)
    sp.add_argument("--V", type=_vec, default=None)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--center", type=_vec, default=[0.0, 0.0])
    sp.add_argument("--radius", type=float, default=1.0)
    sp.add_argument("--u-min", type=float, default=0.0)
    sp.add_argument("--u-max", type=float, default=0.1)
    sp.add_argument("--front-samples", type=int, default=9)
    sp.add_argument("--checkpoints", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_fronts, out="out")

    sp = sub.add_parser("trace", help="trace one ray and print its events")
    common(sp)
    sp.add_argument("--x", type=_vec, default=None)
    sp.add_argument("--v", type=_vec, default=None)
    sp.add_argument("--s", type=float, default=0.0, help="boundary parameter of the entry point")
    sp.add_argument("--alpha", type=float, default=0.0, help="angle from the inward normal")
    sp.set_defaults(func=cmd_trace)
    return p


def _apply_config(parser, args, argv):
    """Fill options from ``--config``; explicit command-line flags win."""
    if not args.config:
        return args
    try:
        node = yaml.safe_load(Path(args.config).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise SceneError(f"cannot read config: {exc}", key="config") from None
    if not isinstance(node, dict):
        raise SceneError("config must be a mapping", key="config")
    known = set(vars(args)) - {"func", "command", "config"}
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for k, v in node.items():
        dest = str(k).replace("-", "_")
        if dest not in known:
            raise SceneError(f"unknown config key '{k}'", key=str(k))
        if dest not in given:
            setattr(args, dest, v)
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(parser, args, argv)
        if not args.scene:
            raise SceneError("--scene is required", key="scene")
        if args.command == "compare" and not args.scene_b:
            raise SceneError("--scene-b is required", key="scene-b")
        if args.command == "trace" and (args.x is None) != (args.v is None):
            raise SceneError("--x and --v must be given together", key="x")
        return args.func(args)
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
