"""Kernel dispatch: compiled core when available, Python otherwise.

Set ``BILLIARDLAB_PURE_PYTHON=1`` to force the Python kernel.
"""

import os

from . import _kernel

_core = None
if os.environ.get("BILLIARDLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core
    except ImportError:  # extension not built
        _core = None

HAVE_CORE = _core is not None


def advance_packed(packed, y0, t_max, skip, hmax, h0, use_core=None):
    if use_core is None:
        use_core = HAVE_CORE
    if use_core:
        if _core is None:
            raise RuntimeError("compiled core is not available")
        return _core.advance_packed(packed, y0, t_max, skip, hmax, h0)
    return _kernel.advance(_kernel.PackedSystem(packed), y0, t_max, skip, hmax, h0)


def advance_generic(chart, bodies, y0, t_max, skip, hmax, h0):
    return _kernel.advance(_kernel.PySystem(chart, bodies), y0, t_max, skip, hmax, h0)
