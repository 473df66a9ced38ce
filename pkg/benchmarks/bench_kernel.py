"""Compare the compiled event kernel with the pure-Python fallback.

Usage: ``python benchmarks/bench_kernel.py [--rays 2000] [--scene two-disc]``

Both kernels trace the same random inward rays; the script reports rays per
second for each and the largest travelling-time difference between them.
"""

import argparse
import time

from billiardlab import kernels, tutorial
from billiardlab.billiard import Limits, Sampler, _Engine, sampler_sigmas, trace


def run(scene, sigmas, limits, use_core):
    eng = _Engine(scene, use_core=use_core)
    t0 = time.perf_counter()
    times = [trace(scene, s, limits, engine=eng).total_time for s in sigmas]
    return time.perf_counter() - t0, times


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rays", type=int, default=2000)
    ap.add_argument("--scene", default="two-disc")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    scene = tutorial.load(args.scene)
    limits = Limits.for_scene(scene)
    sigmas = sampler_sigmas(scene, Sampler("random", args.rays, args.seed))
    print(f"scene={scene.name} rays={args.rays} compiled core available={kernels.HAVE_CORE}")
    t_py, r_py = run(scene, sigmas, limits, use_core=False)
    print(f"python  : {t_py:8.3f} s  {args.rays / t_py:10.1f} rays/s")
    if kernels.HAVE_CORE:
        t_c, r_c = run(scene, sigmas, limits, use_core=True)
        diff = max(abs(a - b) for a, b in zip(r_py, r_c))
        print(f"compiled: {t_c:8.3f} s  {args.rays / t_c:10.1f} rays/s")
        print(f"speed-up: {t_py / t_c:8.1f}x   max |t_py - t_core| = {diff:.3e}")


if __name__ == "__main__":
    main()
