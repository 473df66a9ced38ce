"""CSV, JSON and SVG writers.

Every file starts with a provenance line carrying the tool version, the
scene hash and the seed.  Numbers are written with 12 significant digits so
reruns are byte-identical.
"""

from __future__ import annotations

import io
import json
import math

import numpy as np

from . import __version__


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    out = format(v, ".12g")
    return "0" if out == "-0" else out


def provenance_line(scene_hash, seed, extra=None):
    parts = [f"billiardlab {__version__}", f"scene_sha256={scene_hash or 'none'}", f"seed={seed}"]
    if extra:
        parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def write_csv(path, header, rows, scene_hash, seed, extra=None):
    buf = io.StringIO()
    buf.write(provenance_line(scene_hash, seed, extra) + "\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(c if isinstance(c, str) else fmt(c) for c in row) + "\n")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """``(provenance, header, rows)`` with rows as lists of strings."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    prov = lines[0]
    header = lines[1].split(",")
    return prov, header, [ln.split(",") for ln in lines[2:]]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data, scene_hash, seed):
    doc = {"tool": "billiardlab", "version": __version__, "scene_sha256": scene_hash, "seed": seed}
    doc.update(_jsonable(data))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# travelling times

def travel_header(dim):
    names = ["s"] if dim == 2 else ["theta", "phi"]
    return [f"entry_{n}" for n in names] + [f"exit_{n}" for n in names] + \
        ["t", "reflections", "tangencies", "itinerary"]


def travel_rows(records):
    for r in records:
        yield list(np.atleast_1d(r.x)) + list(np.atleast_1d(r.y)) + \
            [r.t, r.reflections, r.tangencies, "-".join(str(s) for s in r.itinerary)]


# ---------------------------------------------------------------------------
# fronts

def front_header(dim):
    m = dim - 1
    return ([f"u{i + 1}" for i in range(m)] + [f"x{i + 1}" for i in range(dim)] +
            [f"n{i + 1}" for i in range(dim)] +
            [f"s{i + 1}{j + 1}" for i in range(m) for j in range(i, m)] + ["min_eig", "t"])


def front_rows(patch):
    for u, st in zip(patch.params, patch.states):
        if st is None:
            continue
        m = st.s.shape[0]
        s = [st.s[i, j] for i in range(m) for j in range(i, m)]
        yield list(np.atleast_1d(u)) + list(st.x) + list(st.N) + s + [st.min_curvature(), st.t]


# ---------------------------------------------------------------------------
# SVG

def _polyline(pts, to_px, cls, stroke, width=1.0, closed=False):
    coords = " ".join(f"{fmt(a)},{fmt(b)}" for a, b in (to_px(p) for p in pts))
    tag = "polygon" if closed else "polyline"
    return (f'<{tag} class="{cls}" points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{fmt(width)}"/>')


def _outline(body, count=256):
    ang = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
    return [body.boundary_point(np.array([a])) for a in ang]


def scene_svg(scene, patches=(), rays=(), scene_hash=None, seed=None, size=600):
    """SVG of a 2D scene: the boundary of S, one path per obstacle, patches and rays.

    ``patches`` are lists of points drawn as polylines (class ``patch``);
    ``rays`` are lists of points drawn as thin polylines (class ``ray``).
    """
    if scene.dim != 2:
        raise ValueError("SVG output is available for n = 2 only")
    outline_S = _outline(scene.S)
    pts = np.array(outline_S)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = float(max(hi - lo)) * 1.05
    mid = 0.5 * (lo + hi)
    scale = size / span

    def to_px(p):
        return ((p[0] - mid[0]) * scale + size / 2, size / 2 - (p[1] - mid[1]) * scale)

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f"<!-- {provenance_line(scene_hash, seed)[2:]} -->",
           _polyline(outline_S, to_px, "boundary", "#000000", 1.5, closed=True)]
    for k in scene.obstacles:
        out.append(f'<path class="obstacle" id="K{k.label}" d="{_path_d(_outline(k), to_px)}" '
                   f'fill="#dddddd" stroke="#333333"/>')
    for pl in patches:
        out.append(_polyline(pl, to_px, "patch", "#c0392b", 2.0))
    for pl in rays:
        out.append(_polyline(pl, to_px, "ray", "#2471a3", 0.5))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _path_d(pts, to_px):
    segs = []
    for i, p in enumerate(pts):
        a, b = to_px(p)
        segs.append(f"{'M' if i == 0 else 'L'}{fmt(a)} {fmt(b)}")
    return " ".join(segs) + " Z"


def write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)
