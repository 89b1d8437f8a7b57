"""Timing comparison of the compiled kernels against the pure fallbacks.

Run as `python -m hmfg.benchmark`.  Sizes are chosen so the pure backend
finishes in seconds; production grids are larger and the gap grows with
them.
"""

from __future__ import annotations

import time

import numpy as np

from . import couplings
from ._kernels import COMPILED, pure, pmp_integrate, hjb_sweep


def _time(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _conv_pack(levels=50, particles=200, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-1, 1, size=(levels + 1, particles, 3))
    w = np.full(particles, 1.0 / particles)
    kern = couplings.autocorr_kernel(1.0)
    cost = couplings.ConvCost(kern, 0.2, pos, w, t0=0.0, dt=1.0 / levels)
    return cost.kernel_pack()


def bench_pmp(steps=400, arcs=20):
    pack = _conv_pack()
    rng = np.random.default_rng(1)
    x0s = rng.uniform(-1, 1, size=(arcs, 3))
    p0s = rng.uniform(-0.5, 0.5, size=(arcs, 3))

    def run(fn):
        for x0, p0 in zip(x0s, p0s):
            fn(x0, p0, 0.0, 1.0 / steps, steps, 0.1, 2.0, pack, False)

    t_pure = _time(lambda: run(pure.pmp_integrate))
    t_fast = _time(lambda: run(pmp_integrate)) if COMPILED else None
    return {"task": f"pmp arcs ({arcs} arcs x {steps} steps, conv cost)",
            "pure": t_pure, "compiled": t_fast}


def bench_hjb(resolution=15, control_points=5):
    rng = np.random.default_rng(2)
    u = rng.uniform(0, 1, size=(resolution,) * 3)
    flags = np.zeros_like(u, dtype=np.uint8)
    ax = np.linspace(-2.5, 2.5, control_points)
    grids = np.meshgrid(*([ax] * 3), indexing="ij")
    controls = np.ascontiguousarray(np.stack([g.ravel() for g in grids], axis=-1))
    ctrl_cost = 0.5 * np.sum(controls**2, axis=-1)
    f_node = np.zeros_like(u)
    u_out = np.empty_like(u)
    flags_out = np.empty_like(flags)

    def run(fn):
        fn(u, flags, 2.0, 0.05, 0.1, controls, ctrl_cost, f_node, u_out, flags_out)

    t_pure = _time(lambda: run(pure.hjb_sweep), repeat=1)
    t_fast = _time(lambda: run(hjb_sweep)) if COMPILED else None
    return {"task": f"hjb backward level ({resolution}^3 grid, {control_points}^3 controls)",
            "pure": t_pure, "compiled": t_fast}


def bench_all():
    return [bench_pmp(), bench_hjb()]


def main():
    rows = bench_all()
    print(f"backend available: {'compiled + pure' if COMPILED else 'pure only'}")
    print(f"{'task':54s} {'pure':>10s} {'compiled':>10s} {'speedup':>8s}")
    for r in rows:
        if r["compiled"] is None:
            print(f"{r['task']:54s} {r['pure']:9.3f}s {'-':>10s} {'-':>8s}")
        else:
            print(f"{r['task']:54s} {r['pure']:9.3f}s {r['compiled']:9.3f}s "
                  f"{r['pure'] / r['compiled']:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
