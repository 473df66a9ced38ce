"""Scene files: one YAML document per scene, strict keys.

Grammar (see ``docs/formats.md``)::

    name: two-disc
    chart: {kind: flat | constant, dim: 2, c: -1.0}
    S: {shape: disc, params: {center: [0, 0], radius: 5}}
    obstacles:
      - {shape: disc, params: {center: [-2, 0], radius: 1}}
    estimation: {rays: 2000, fronts: 200, seed: 7, cond2_variant: false}

Every mapping rejects unknown keys; errors carry the offending key and the
line number in the source text.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from .bodies import Ellipsoid, ImplicitPolynomial, ball, disc, ellipse
from .errors import SceneError
from .geometry import constant_curvature_chart, flat_chart
from .scene import EstimationBudget, Scene

TOP_KEYS = {"name", "chart", "S", "obstacles", "estimation"}
REQUIRED_TOP = {"chart", "S", "obstacles"}
CHART_KEYS = {"kind", "dim", "c"}
BODY_KEYS = {"shape", "params"}
SHAPE_PARAMS = {
    "disc": ({"center", "radius"}, {"center", "radius"}),
    "ball": ({"center", "radius"}, {"center", "radius"}),
    "ellipse": ({"center", "axes", "angle"}, {"center", "axes"}),
    "ellipsoid": ({"center", "axes", "rotation"}, {"center", "axes"}),
    "implicit-polynomial": ({"center", "terms"}, {"center", "terms"}),
}
ESTIMATION_KEYS = {f.name for f in fields(EstimationBudget)}


def _line(node):
    return node.start_mark.line + 1


def _to_python(node):
    """Plain Python value of a YAML node; mappings become ``(dict, marks)``."""
    if isinstance(node, yaml.MappingNode):
        out, marks = {}, {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise SceneError(f"duplicate key '{key}'", key=key, line=_line(k))
            out[key] = _to_python(v)
            marks[key] = _line(k)
        return _Map(out, marks, _line(node))
    if isinstance(node, yaml.SequenceNode):
        return _Seq([_to_python(v) for v in node.value], _line(node))
    return yaml.safe_load(yaml.serialize(node))


class _Map(dict):
    def __init__(self, data, marks, line):
        super().__init__(data)
        self.marks = marks
        self.line = line

    def check(self, allowed, required, where):
        for k in self:
            if k not in allowed:
                raise SceneError(f"unknown key '{k}' in {where}", key=k, line=self.marks[k])
        for k in required:
            if k not in self:
                raise SceneError(f"missing key '{k}' in {where}", key=k, line=self.line)


class _Seq(list):
    def __init__(self, data, line):
        super().__init__(data)
        self.line = line


def _plain(v):
    if isinstance(v, _Map):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, _Seq):
        return [_plain(x) for x in v]
    return v


def _vector(m, key, where, dim=None):
    v = _plain(m[key])
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise SceneError(f"'{key}' in {where} must be a list of numbers", key=key, line=m.marks[key]) from None
    if arr.ndim != 1 or (dim is not None and arr.size != dim) or not np.all(np.isfinite(arr)):
        raise SceneError(f"'{key}' in {where} must be a finite vector of length {dim}", key=key,
                         line=m.marks[key])
    return arr


def _positive(m, key, where):
    v = m[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
        raise SceneError(f"'{key}' in {where} must be a positive number", key=key, line=m.marks[key])
    return float(v)


def _body(m, dim, where):
    if not isinstance(m, _Map):
        raise SceneError(f"{where} must be a mapping", key=where, line=getattr(m, "line", None))
    m.check(BODY_KEYS, BODY_KEYS, where)
    shape = m["shape"]
    if shape not in SHAPE_PARAMS:
        raise SceneError(f"unknown shape '{shape}' in {where}", key="shape", line=m.marks["shape"])
    p = m["params"]
    if not isinstance(p, _Map):
        raise SceneError(f"params of {where} must be a mapping", key="params", line=m.marks["params"])
    allowed, required = SHAPE_PARAMS[shape]
    p.check(allowed, required, f"{where}.params")
    c = _vector(p, "center", where, dim)
    if shape in ("disc", "ball"):
        if (shape == "disc") != (dim == 2):
            raise SceneError(f"shape '{shape}' does not fit dimension {dim}", key="shape", line=m.marks["shape"])
        r = _positive(p, "radius", where)
        return disc(c, r) if dim == 2 else ball(c, r)
    if shape == "ellipse":
        if dim != 2:
            raise SceneError("ellipse requires dim 2", key="shape", line=m.marks["shape"])
        axes = _vector(p, "axes", where, 2)
        if np.any(axes <= 0):
            raise SceneError("axes must be positive", key="axes", line=p.marks["axes"])
        return ellipse(c, axes, float(p.get("angle", 0.0)))
    if shape == "ellipsoid":
        axes = _vector(p, "axes", where, dim)
        if np.any(axes <= 0):
            raise SceneError("axes must be positive", key="axes", line=p.marks["axes"])
        rot = None
        if "rotation" in p:
            rot = np.asarray(_plain(p["rotation"]), dtype=float)
            if rot.shape != (dim, dim) or not np.allclose(rot @ rot.T, np.eye(dim), atol=1e-9):
                raise SceneError("rotation must be an orthogonal matrix", key="rotation", line=p.marks["rotation"])
        return Ellipsoid(c, axes, rot)
    terms = _plain(p["terms"])
    try:
        return ImplicitPolynomial([(float(a), [int(e) for e in b]) for a, b in terms], c)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"bad polynomial terms: {exc}", key="terms", line=p.marks["terms"]) from None


def _chart(m):
    if not isinstance(m, _Map):
        raise SceneError("chart must be a mapping", key="chart")
    m.check(CHART_KEYS, {"kind", "dim"}, "chart")
    dim = m["dim"]
    if not isinstance(dim, int) or dim not in (2, 3):
        raise SceneError("chart.dim must be 2 or 3", key="dim", line=m.marks["dim"])
    kind = m["kind"]
    if kind == "flat":
        if "c" in m:
            raise SceneError("flat chart takes no curvature 'c'", key="c", line=m.marks["c"])
        return flat_chart(dim)
    if kind == "constant":
        if "c" not in m:
            raise SceneError("constant chart requires 'c'", key="c", line=m.line)
        c = m["c"]
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise SceneError("chart.c must be a number", key="c", line=m.marks["c"])
        return constant_curvature_chart(float(c), dim)
    raise SceneError(f"unknown chart kind '{kind}'", key="kind", line=m.marks["kind"])


def _estimation(m):
    if m is None:
        return EstimationBudget()
    if not isinstance(m, _Map):
        raise SceneError("estimation must be a mapping", key="estimation")
    m.check(ESTIMATION_KEYS, set(), "estimation")
    kw = {}
    for f in fields(EstimationBudget):
        if f.name in m:
            v = m[f.name]
            want = type(f.default)
            if want is bool:
                ok = isinstance(v, bool)
            elif want is int:
                ok = isinstance(v, int) and not isinstance(v, bool) and v >= 0
            else:
                ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            if not ok:
                raise SceneError(f"estimation.{f.name} must be {want.__name__}", key=f.name, line=m.marks[f.name])
            kw[f.name] = want(v)
    return EstimationBudget(**kw)


def scene_from_text(text, name=None, validate=True) -> Scene:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SceneError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                         line=mark.line + 1 if mark else None) from None
    if node is None:
        raise SceneError("empty scene document")
    doc = _to_python(node)
    if not isinstance(doc, _Map):
        raise SceneError("scene document must be a mapping", line=1)
    doc.check(TOP_KEYS, REQUIRED_TOP, "scene")
    chart = _chart(doc["chart"])
    S = _body(doc["S"], chart.dim, "S")
    obs = doc["obstacles"]
    if not isinstance(obs, _Seq):
        raise SceneError("obstacles must be a list", key="obstacles", line=doc.marks["obstacles"])
    bodies = [_body(o, chart.dim, f"obstacles[{i}]") for i, o in enumerate(obs)]
    est = _estimation(doc.get("estimation"))
    digest = hashlib.sha256(text.encode()).hexdigest()
    scene_name = doc.get("name") or name or "scene"
    try:
        return Scene(chart, S, bodies, name=str(scene_name), estimation=est, validate=validate,
                     source_hash=digest)
    except SceneError:
        raise
    except ValueError as exc:
        raise SceneError(str(exc)) from None


def load_scene(path, validate=True) -> Scene:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SceneError(f"cannot read scene file: {exc}", key=str(path)) from None
    return scene_from_text(text, name=p.stem, validate=validate)
