"""Named tutorial scenes and the front-collision probe configurations."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .bodies import disc
from .fronts import body_front
from .geometry import flat_chart
from .sceneio import scene_from_text

CONDITION1 = ("two-disc", "three-disc", "ellipse-pair", "hyperbolic-two-disc", "three-ball")


def scene_names():
    files = resources.files("billiardlab").joinpath("scenes")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def scene_text(name):
    path = resources.files("billiardlab").joinpath("scenes").joinpath(f"{name}.yaml")
    if not path.is_file():
        raise KeyError(f"unknown tutorial scene '{name}'; available: {', '.join(scene_names())}")
    return path.read_text()


def load(name, validate=True):
    return scene_from_text(scene_text(name), name=name, validate=validate)


def collision_probe(case="two-circle"):
    """``(chart, X, Y, x_range, y_range)`` for the collision probe.

    ``X`` is the unit circle with outward normals.  ``Y`` carries normals
    pointing along the direction of travel of ``X``'s rays at the hit:
    ``two-circle`` is the half of the unit circle about ``(10, 0)`` that
    faces ``X``, ``off-axis`` the same arc moved by ``(0, 3)``, and
    ``concentric`` the circle of radius 3 about the origin.
    """
    chart = flat_chart(2)
    X = body_front(chart, disc((0, 0), 1), np.linspace(-np.pi, np.pi, 65), 1.0, "probe X")
    if case == "two-circle":
        Y = body_front(chart, disc((10, 0), 1), np.linspace(np.pi / 2, 3 * np.pi / 2, 33), -1.0, "probe Y")
        yr = (np.pi / 2, 3 * np.pi / 2)
    elif case == "off-axis":
        c = np.array([10.0, 3.0])
        a = np.arctan2(-c[1], -c[0])
        Y = body_front(chart, disc(c, 1), np.linspace(a - np.pi / 2, a + np.pi / 2, 33), -1.0, "probe Y")
        yr = (a - np.pi / 2, a + np.pi / 2)
    elif case == "concentric":
        Y = body_front(chart, disc((0, 0), 3), np.linspace(-np.pi, np.pi, 65), 1.0, "probe Y")
        yr = (-np.pi, np.pi)
    else:
        raise KeyError(f"unknown probe case '{case}'")
    return chart, X, Y, (-np.pi, np.pi), yr
