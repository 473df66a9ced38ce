"""Billiards in Riemannian charts with strictly convex obstacles.

Submodules: ``geometry`` (charts, geodesics, transport), ``scene`` (bodies
and global constants), ``billiard`` (events, trajectories, travelling
times), ``fronts`` (convex wavefronts) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (BilliardLabError, NumericalError, SceneError)  # noqa: F401
from .geometry import (PhasePoint, StepControl, constant_curvature_chart, flat_chart,  # noqa: F401
                       integrate_geodesic, numeric_chart, sectional_curvature)
from .kernels import HAVE_CORE  # noqa: F401
from .scene import EstimationBudget, Scene, ball, disc, ellipse  # noqa: F401
from .sceneio import load_scene, scene_from_text  # noqa: F401
