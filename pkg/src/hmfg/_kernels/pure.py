"""Pure numpy implementations of the hot kernels (reference semantics).

The compiled extension mirrors these signatures; hmfg._kernels selects one
backend at import time.  Both operate on the flat cost packs exported by
couplings.FrozenCost.kernel_pack() and are specific to the 3-dimensional
Heisenberg structure; other structures go through the generic python path
in hmfg.ocp / hmfg.hjb_grid.
"""

from __future__ import annotations

import numpy as np

COMPILED = False

_KIND_CONST = 1
_KIND_AFFINE = 2
_KIND_SATQUAD = 3


def _tab_eval(tq, dt, V, D):
    g = tq / dt
    g = np.clip(g, 0.0, len(V) - 1.0 - 1e-12)
    i = g.astype(np.int64)
    s = g - i
    h00 = (2.0 * s - 3.0) * s * s + 1.0
    h10 = ((s - 2.0) * s + 1.0) * s
    h01 = (3.0 - 2.0 * s) * s * s
    h11 = (s - 1.0) * s * s
    return h00 * V[i] + dt * h10 * D[i] + h01 * V[i + 1] + dt * h11 * D[i + 1]


def _conv_positions(pack, t):
    pos = pack["conv_pos"]
    K = pos.shape[0] - 1
    if K == 0:
        return pos[0]
    t0, dtp = pack["conv_par"][2], pack["conv_par"][3]
    g = np.clip((t - t0) / dtp, 0.0, K)
    i = min(int(g), K - 1)
    s = g - i
    return (1.0 - s) * pos[i] + s * pos[i + 1]


def cost_value(pack, x, t):
    x = np.asarray(x, dtype=float)
    v = 0.0
    for kind, par in zip(pack["kinds"], pack["params"]):
        if kind == _KIND_CONST:
            v += par[0]
        elif kind == _KIND_AFFINE:
            v += par[0] * x[0] + par[1] * x[1] + par[2] * x[2] + par[3]
        elif kind == _KIND_SATQUAD:
            s = x[0] * x[0] + x[1] * x[1]
            v += par[0] * s / (1.0 + s)
    if pack["conv"]:
        strength, support = pack["conv_par"][0], pack["conv_par"][1]
        pos = _conv_positions(pack, t)
        d = x[None, :] - pos
        rr = np.sqrt(np.sum(d * d, axis=1))
        msk = rr < support
        if msk.any():
            vals = _tab_eval(rr[msk], pack["tab_dt"], pack["tab_v"], pack["tab_d1"])
            v += strength * float(np.dot(pack["conv_w"][msk], vals))
    return v


def cost_grad(pack, x, t):
    x = np.asarray(x, dtype=float)
    g = np.zeros(3)
    for kind, par in zip(pack["kinds"], pack["params"]):
        if kind == _KIND_AFFINE:
            g[0] += par[0]
            g[1] += par[1]
            g[2] += par[2]
        elif kind == _KIND_SATQUAD:
            s = x[0] * x[0] + x[1] * x[1]
            c = par[0] * 2.0 / (1.0 + s) ** 2
            g[0] += c * x[0]
            g[1] += c * x[1]
    if pack["conv"]:
        strength, support = pack["conv_par"][0], pack["conv_par"][1]
        pos = _conv_positions(pack, t)
        d = x[None, :] - pos
        rr = np.sqrt(np.sum(d * d, axis=1))
        msk = (rr < support) & (rr > 1e-12)
        if msk.any():
            dp = _tab_eval(rr[msk], pack["tab_dt"], pack["tab_d1"], pack["tab_d2"])
            coef = strength * pack["conv_w"][msk] * dp / rr[msk]
            g += coef @ d[msk]
    return g


def _rhs(x, p, t, eps, gamma, fpack):
    q1 = p[0] - x[1] * p[2]
    q2 = p[1] + x[0] * p[2]
    q3 = eps * p[2]
    if gamma == 2.0:
        scale = 1.0
    else:
        nq = np.sqrt(q1 * q1 + q2 * q2 + q3 * q3)
        scale = 0.0 if nq <= 1e-12 else gamma * nq ** (gamma - 2.0)
    df = cost_grad(fpack, x, t)
    dx = np.array(
        [scale * q1, scale * q2, scale * (-x[1] * q1 + x[0] * q2 + eps * q3)]
    )
    dp = np.array([-scale * q2 * p[2] + df[0], scale * q1 * p[2] + df[1], df[2]])
    return dx, dp


def pmp_integrate(x0, p0, t0, dt, steps, eps, gamma, fpack, store_path=True):
    """Classical RK4 on the coupled state/costate system; returns either the
    full arrays (steps+1, 3) or just the terminal pair."""
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    if store_path:
        xs = np.empty((steps + 1, 3))
        ps = np.empty((steps + 1, 3))
        xs[0], ps[0] = x, p
    for k in range(steps):
        t = t0 + k * dt
        k1x, k1p = _rhs(x, p, t, eps, gamma, fpack)
        k2x, k2p = _rhs(x + 0.5 * dt * k1x, p + 0.5 * dt * k1p, t + 0.5 * dt, eps, gamma, fpack)
        k3x, k3p = _rhs(x + 0.5 * dt * k2x, p + 0.5 * dt * k2p, t + 0.5 * dt, eps, gamma, fpack)
        k4x, k4p = _rhs(x + dt * k3x, p + dt * k3p, t + dt, eps, gamma, fpack)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if store_path:
            xs[k + 1], ps[k + 1] = x, p
    if store_path:
        return xs, ps
    return x, p


def hjb_sweep(u_next, flags_next, L, dt, eps, controls, ctrl_cost, f_node, u_out, flags_out):
    """One backward semi-Lagrangian level on the [-L, L]^3 grid.

    u_out = dt * f + min_c [ ctrl_cost_c + I(u_next)(x + dt B^eps(x) a_c) ]
    with trilinear interpolation, flat extrapolation outside the box.  A
    node is flagged when the argmin foot leaves the box or interpolates a
    flagged node of the next level."""
    nx = u_next.shape[0]
    h = 2.0 * L / (nx - 1)
    ax = np.linspace(-L, L, nx)
    X1, X2, X3 = np.meshgrid(ax, ax, ax, indexing="ij")
    x1, x2, x3 = X1.ravel(), X2.ravel(), X3.ravel()
    mc = controls.shape[1]

    best = np.full(x1.shape, np.inf)
    best_c = np.zeros(x1.shape, dtype=np.int64)

    def feet(a):
        f1 = x1 + dt * a[0]
        f2 = x2 + dt * a[1]
        f3 = x3 + dt * (-x2 * a[0] + x1 * a[1] + (eps * a[2] if mc == 3 else 0.0))
        return f1, f2, f3

    def interp(f1, f2, f3):
        g1 = np.clip((f1 + L) / h, 0.0, nx - 1.0)
        g2 = np.clip((f2 + L) / h, 0.0, nx - 1.0)
        g3 = np.clip((f3 + L) / h, 0.0, nx - 1.0)
        i1 = np.minimum(g1.astype(np.int64), nx - 2)
        i2 = np.minimum(g2.astype(np.int64), nx - 2)
        i3 = np.minimum(g3.astype(np.int64), nx - 2)
        t1, t2, t3 = g1 - i1, g2 - i2, g3 - i3
        v = np.zeros_like(g1)
        for d1 in (0, 1):
            w1 = 1.0 - t1 if d1 == 0 else t1
            for d2 in (0, 1):
                w2 = 1.0 - t2 if d2 == 0 else t2
                for d3 in (0, 1):
                    w3 = 1.0 - t3 if d3 == 0 else t3
                    v += w1 * w2 * w3 * u_next[i1 + d1, i2 + d2, i3 + d3]
        return v, (i1, i2, i3)

    for c in range(len(controls)):
        f1, f2, f3 = feet(controls[c])
        v, _ = interp(f1, f2, f3)
        cand = ctrl_cost[c] + v
        upd = cand < best
        best[upd] = cand[upd]
        best_c[upd] = c

    # contamination pass for the winning control of each node
    flags_flat = np.zeros(x1.shape, dtype=np.uint8)
    for c in range(len(controls)):
        msk = best_c == c
        if not msk.any():
            continue
        f1, f2, f3 = (f[msk] for f in feet(controls[c]))
        outside = (
            (f1 < -L) | (f1 > L) | (f2 < -L) | (f2 > L) | (f3 < -L) | (f3 > L)
        )
        _, (i1, i2, i3) = interp(f1, f2, f3)
        corner = np.zeros(f1.shape, dtype=bool)
        for d1 in (0, 1):
            for d2 in (0, 1):
                for d3 in (0, 1):
                    corner |= flags_next[i1 + d1, i2 + d2, i3 + d3] > 0
        flags_flat[msk] = (outside | corner).astype(np.uint8)

    u_out[...] = dt * f_node + best.reshape(u_next.shape)
    flags_out[...] = flags_flat.reshape(u_next.shape)
