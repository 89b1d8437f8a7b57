"""Semi-Lagrangian grid solver for the backward HJB equation on a box.

Coarse independent oracle for ocp.value: backward dynamic programming
with trilinear interpolation, flat extrapolation, and contamination flags
wherever a winning foot left the box or read a flagged node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmfg import _kernels as kernels
from hmfg import ocp
from hmfg.couplings import FrozenCost
from hmfg.geometry import matrix_B
from hmfg.hamiltonian import HamiltonianSpec, control_cost


@dataclass(frozen=True)
class GridValueFunction:
    box: float
    times: np.ndarray
    values: np.ndarray  # (levels, nx, nx, nx)
    flags: np.ndarray   # uint8, same shape

    @property
    def resolution(self):
        return self.values.shape[1]

    def _space_interp(self, arr, x):
        nx = self.resolution
        h = 2.0 * self.box / (nx - 1)
        x = np.asarray(x, dtype=float)
        g = np.clip((x + self.box) / h, 0.0, nx - 1.0)
        i = np.minimum(g.astype(np.int64), nx - 2)
        t = g - i
        v = 0.0
        for d1 in (0, 1):
            w1 = t[..., 0] if d1 else 1.0 - t[..., 0]
            for d2 in (0, 1):
                w2 = t[..., 1] if d2 else 1.0 - t[..., 1]
                for d3 in (0, 1):
                    w3 = t[..., 2] if d3 else 1.0 - t[..., 2]
                    v = v + w1 * w2 * w3 * arr[i[..., 0] + d1, i[..., 1] + d2, i[..., 2] + d3]
        return v

    def _levels(self, t):
        times = self.times
        if t <= times[0]:
            return 0, 0, 0.0
        if t >= times[-1]:
            return len(times) - 1, len(times) - 1, 0.0
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(k, len(times) - 2)
        s = (t - times[k]) / (times[k + 1] - times[k])
        return k, k + 1, float(s)

    def evaluate(self, x, t):
        """Trilinear in space, linear between time levels, flat outside."""
        k0, k1, s = self._levels(t)
        v0 = self._space_interp(self.values[k0], x)
        if k1 == k0:
            return v0
        return (1.0 - s) * v0 + s * self._space_interp(self.values[k1], x)

    def contaminated(self, x, t):
        """Whether any interpolation corner at either bracketing level
        carries the boundary flag; elementwise for batched x."""
        k0, k1, s = self._levels(t)
        c = self._space_interp(self.flags[k0].astype(float), x) > 0.0
        if k1 != k0:
            c = c | (self._space_interp(self.flags[k1].astype(float), x) > 0.0)
        return bool(c) if np.ndim(c) == 0 else c


def control_grid(bound: float, points: int, mc: int):
    ax = np.linspace(-bound, bound, points)
    grids = np.meshgrid(*([ax] * mc), indexing="ij")
    return np.ascontiguousarray(np.stack([g.ravel() for g in grids], axis=-1))


def _generic_sweep(st, u_next, flags_next, L, dt, controls, ctrl_cost, f_node, u_out, flags_out):
    nx = u_next.shape[0]
    h = 2.0 * L / (nx - 1)
    ax = np.linspace(-L, L, nx)
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    B = matrix_B(st, X)

    def interp(F):
        g = np.clip((F + L) / h, 0.0, nx - 1.0)
        i = np.minimum(g.astype(np.int64), nx - 2)
        t = g - i
        v = np.zeros(F.shape[0])
        for d1 in (0, 1):
            w1 = t[:, 0] if d1 else 1.0 - t[:, 0]
            for d2 in (0, 1):
                w2 = t[:, 1] if d2 else 1.0 - t[:, 1]
                for d3 in (0, 1):
                    w3 = t[:, 2] if d3 else 1.0 - t[:, 2]
                    v += w1 * w2 * w3 * u_next[i[:, 0] + d1, i[:, 1] + d2, i[:, 2] + d3]
        return v, i

    best = np.full(X.shape[0], np.inf)
    best_c = np.zeros(X.shape[0], dtype=np.int64)
    for c in range(len(controls)):
        if not np.isfinite(ctrl_cost[c]):
            continue
        F = X + dt * (B @ controls[c])
        v, _ = interp(F)
        cand = ctrl_cost[c] + v
        upd = cand < best
        best[upd] = cand[upd]
        best_c[upd] = c
    flags_flat = np.zeros(X.shape[0], dtype=np.uint8)
    for c in np.unique(best_c):
        msk = best_c == c
        F = X[msk] + dt * (B[msk] @ controls[c])
        outside = np.any((F < -L) | (F > L), axis=1)
        _, i = interp(F)
        corner = np.zeros(F.shape[0], dtype=bool)
        for d1 in (0, 1):
            for d2 in (0, 1):
                for d3 in (0, 1):
                    corner |= flags_next[i[:, 0] + d1, i[:, 1] + d2, i[:, 2] + d3] > 0
        flags_flat[msk] = (outside | corner).astype(np.uint8)
    u_out[...] = dt * f_node + best.reshape(u_next.shape)
    flags_out[...] = flags_flat.reshape(u_next.shape)


def solve_hjb(f: FrozenCost, g: FrozenCost, spec: HamiltonianSpec, box: float = 3.0,
              resolution: int = 61, steps: int = 20, T: float = 1.0,
              control_bound: float = 2.5, control_points: int = 11) -> GridValueFunction:
    """Backward dynamic programming levels t_steps = T down to t_0 = 0.

    The terminal level is g sampled at the nodes exactly.  Only 3-state
    structures fit on the grid; Heisenberg without truncation dispatches
    to the compiled sweep."""
    st = spec.structure
    if st.n != 3:
        raise ValueError("grid solver covers 3-dimensional states only")
    nx = resolution
    L = float(box)
    dt = T / steps
    ax = np.linspace(-L, L, nx)
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    times = T * np.arange(steps + 1) / steps

    controls = control_grid(control_bound, control_points, spec.control_dim)
    ctrl_cost = dt * control_cost(spec, controls)

    values = np.empty((steps + 1, nx, nx, nx))
    flags = np.zeros((steps + 1, nx, nx, nx), dtype=np.uint8)
    values[steps] = g.value(X, T)

    fast = st.tag == "heisenberg1" and st.trunc is None
    for k in range(steps - 1, -1, -1):
        f_node = np.asarray(f.value(X, times[k]), dtype=float)
        if f_node.ndim == 0:
            f_node = np.full((nx, nx, nx), float(f_node))
        if fast:
            kernels.hjb_sweep(values[k + 1], flags[k + 1], L, dt, spec.epsilon,
                              controls, ctrl_cost, f_node, values[k], flags[k])
        else:
            _generic_sweep(st, values[k + 1], flags[k + 1], L, dt,
                           controls, ctrl_cost, f_node, values[k], flags[k])
    return GridValueFunction(L, times, values, flags)


def compare_with_ocp(gvf: GridValueFunction, probes, f: FrozenCost, g: FrozenCost,
                     spec: HamiltonianSpec, T: float = 1.0, value_kwargs=None):
    """Max |grid value - ocp.value| over (x, t) probes, with contamination
    noted per probe.  Probes are expected to sit in the clean region."""
    rows = []
    worst = 0.0
    for x, t in probes:
        gv = float(gvf.evaluate(x, t))
        ov = ocp.value(x, t, f, g, spec, T=T, **(value_kwargs or {}))
        err = abs(gv - ov)
        worst = max(worst, err)
        rows.append({"x": np.asarray(x, dtype=float), "t": float(t), "grid": gv,
                     "ocp": ov, "err": err, "contaminated": gvf.contaminated(x, t)})
    return {"max_err": worst, "probes": rows, "resolution": gvf.resolution,
            "box": gvf.box, "levels": len(gvf.times)}
