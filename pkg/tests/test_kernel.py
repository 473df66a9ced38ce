import os
import subprocess
import sys

import numpy as np
import pytest

from billiardlab import kernels, tutorial
from billiardlab.billiard import Limits, Sampler, _Engine, sampler_sigmas, trace

needs_core = pytest.mark.skipif(not kernels.HAVE_CORE, reason="compiled core not built")


@needs_core
@pytest.mark.parametrize("name", ["two-disc", "ellipse-pair", "hyperbolic-two-disc", "three-ball"])
def test_core_matches_python(name):
    sc = tutorial.load(name)
    limits = Limits.for_scene(sc)
    sigmas = sampler_sigmas(sc, Sampler("random", 60, seed=11))
    py, core = _Engine(sc, use_core=False), _Engine(sc, use_core=True)
    for s in sigmas:
        a = trace(sc, s, limits, engine=py)
        b = trace(sc, s, limits, engine=core)
        assert [e.kind for e in a.events] == [e.kind for e in b.events]
        assert [e.body for e in a.events] == [e.body for e in b.events]
        assert a.total_time == pytest.approx(b.total_time, abs=1e-9)
        assert np.allclose(a.end.x, b.end.x, atol=1e-9)


def test_pure_python_fallback():
    env = dict(os.environ, BILLIARDLAB_PURE_PYTHON="1")
    code = ("from billiardlab import kernels, tutorial\n"
            "from billiardlab.billiard import Sampler, sample_travel_times\n"
            "assert not kernels.HAVE_CORE\n"
            "r = sample_travel_times(tutorial.load('two-disc'), Sampler('grid', 20))\n"
            "print(len(r.records), repr(r.records[0].t))\n")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    n, t0 = out.stdout.split()
    from billiardlab.billiard import sample_travel_times
    ref = sample_travel_times(tutorial.load("two-disc"), Sampler("grid", 20))
    assert int(n) == len(ref.records)
    assert float(t0) == pytest.approx(ref.records[0].t, abs=1e-9)
