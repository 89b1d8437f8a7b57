"""Measure couplings F[m], G[m] and the frozen running/terminal costs.

The convolutional coupling uses the compactly supported polynomial bump
phi(x) = c (1 - |x|^2/r^2)^4 on |x| < r, normalized to unit mass on R^3.
The monotone option replaces phi by its autocorrelation phi * phi(-.),
whose Fourier transform is |phi_hat|^2 >= 0; that kernel has no closed
form and is computed exactly as a radial profile (the integrands are
polynomials, so fixed-order Gauss-Legendre is exact) and tabulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, pi

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "RadialKernel",
    "bump_kernel",
    "autocorr_kernel",
    "CouplingSpec",
    "eval_coupling",
    "coupling_grad",
    "lipschitz_in_measure_check",
    "FrozenCost",
    "ZeroCost",
    "ConstantCost",
    "AffineCost",
    "SatQuadCost",
    "ConvCost",
    "SumCost",
    "CallableCost",
    "ZERO_COST",
    "builtin_cost",
    "frozen_from_coupling",
    "frozen_from_path",
]

_TABLE_SIZE = 4097


def _hermite(tq, t0, dt, V, D):
    """Cubic Hermite evaluation of (V, D) tables on a uniform grid."""
    g = (tq - t0) / dt
    g = np.clip(g, 0.0, len(V) - 1.0 - 1e-12)
    i = g.astype(np.int64)
    s = g - i
    h00 = (2.0 * s - 3.0) * s * s + 1.0
    h10 = ((s - 2.0) * s + 1.0) * s
    h01 = (3.0 - 2.0 * s) * s * s
    h11 = (s - 1.0) * s * s
    return h00 * V[i] + dt * h10 * D[i] + h01 * V[i + 1] + dt * h11 * D[i + 1]


class RadialKernel:
    """Radial mollifier with tabulated profile and derivatives."""

    def __init__(self, radius, support, knots_v, knots_d1, knots_d2, label):
        self.radius = float(radius)
        self.support = float(support)
        self.label = label
        self._dt = support / (len(knots_v) - 1)
        self._V = np.asarray(knots_v, dtype=float)
        self._D1 = np.asarray(knots_d1, dtype=float)
        self._D2 = np.asarray(knots_d2, dtype=float)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = _hermite(t, 0.0, self._dt, self._V, self._D1)
        return np.where(t >= self.support, 0.0, out)

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        out = _hermite(t, 0.0, self._dt, self._D1, self._D2)
        return np.where(t >= self.support, 0.0, out)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        g = np.clip(t / self._dt, 0.0, len(self._D2) - 1.000001)
        i = g.astype(np.int64)
        s = g - i
        out = (1.0 - s) * self._D2[i] + s * self._D2[i + 1]
        return np.where(t >= self.support, 0.0, out)

    def c2_norm(self):
        """sup over the support of |value| + |grad| + |hess| (operator norm
        of the radial Hessian is max(|d2|, |d1|/t))."""
        t = np.linspace(1e-9, self.support, 2049)
        v, d1, d2 = self.value(t), self.d1(t), self.d2(t)
        hess = np.maximum(np.abs(d2), np.abs(d1) / t)
        return float(np.max(np.abs(v) + np.abs(d1) + hess))

    def lipschitz(self):
        t = np.linspace(0.0, self.support, 4097)
        return float(np.max(np.abs(self.d1(t))))

    def tables(self):
        return self._dt, self._V, self._D1, self._D2


def _bump_c(radius):
    return 3465.0 / (512.0 * pi * radius**3)


@lru_cache(maxsize=32)
def bump_kernel(radius: float = 1.0) -> RadialKernel:
    """phi(t) = c (1 - t^2/r^2)^4 on [0, r], unit mass on R^3."""
    r = float(radius)
    c = _bump_c(r)
    t = np.linspace(0.0, r, _TABLE_SIZE)
    u = np.clip(1.0 - (t / r) ** 2, 0.0, None)
    V = c * u**4
    D1 = -8.0 * c * t * u**3 / r**2
    D2 = -8.0 * c / r**2 * u**2 * (u - 6.0 * t**2 / r**2)
    return RadialKernel(r, r, V, D1, D2, "bump")


_GL_NODES, _GL_WTS = leggauss(16)


def _autocorr_value(t, r):
    """(phi * phi(-.))(t e) for the unit-mass bump of radius r, exact."""
    if t >= 2.0 * r:
        return 0.0
    tt = t / r
    lo, hi = tt / 2.0, 1.0
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    xi = mid + half * _GL_NODES
    w = half * _GL_WTS
    s = 0.0
    for k in range(5):
        s += comb(4, k) / (2.0 * (5 + k)) * tt ** (4 - k) * np.sum(
            w * (2.0 * xi - tt) ** (4 - k) * (1.0 - xi**2) ** (5 + k)
        )
    c1 = _bump_c(1.0)
    return c1 * c1 * 4.0 * pi * s / r**3


def _autocorr_d1(t, r):
    if t >= 2.0 * r:
        return 0.0
    tt = t / r
    lo, hi = tt / 2.0, 1.0
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    xi = mid + half * _GL_NODES
    w = half * _GL_WTS
    s = 0.0
    for k in range(5):
        ck = comb(4, k) / (2.0 * (5 + k))
        Jk = np.sum(w * (2.0 * xi - tt) ** (4 - k) * (1.0 - xi**2) ** (5 + k))
        if k < 4:
            Lk = np.sum(w * (2.0 * xi - tt) ** (3 - k) * (1.0 - xi**2) ** (5 + k))
            dJk = -(4 - k) * Lk
            s += ck * ((4 - k) * tt ** (3 - k) * Jk + tt ** (4 - k) * dJk)
        else:
            dJk = -0.5 * (1.0 - tt**2 / 4.0) ** 9
            s += ck * dJk
    c1 = _bump_c(1.0)
    return c1 * c1 * 4.0 * pi * s / r**4


@lru_cache(maxsize=32)
def autocorr_kernel(radius: float = 1.0) -> RadialKernel:
    """Autocorrelation of the radius-r bump; support 2r, unit mass."""
    r = float(radius)
    t = np.linspace(0.0, 2.0 * r, _TABLE_SIZE)
    V = np.array([_autocorr_value(x, r) for x in t])
    D1 = np.array([_autocorr_d1(x, r) for x in t])
    h = 1e-5 * r
    D2 = np.array(
        [(_autocorr_d1(min(x + h, 2.0 * r), r) - _autocorr_d1(max(x - h, 0.0), r)) / (2.0 * h) for x in t]
    )
    return RadialKernel(r, 2.0 * r, V, D1, D2, "autocorr")


# ---------------------------------------------------------------------------
# coupling specifications

@dataclass(frozen=True)
class CouplingSpec:
    """F[m] specification.

    kind "zero": F[m] = 0.  kind "conv": F[m](x) = strength * (K * m)(x)
    with K the bump (or its autocorrelation when monotone is set).
    kind "explicit": a named builtin independent of m.
    """

    kind: str = "zero"
    radius: float = 1.0
    strength: float = 0.0
    monotone: bool = False
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("zero", "conv", "explicit"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.kind == "conv" and self.radius <= 0.0:
            raise ValueError("conv coupling needs radius > 0")
        if self.kind == "explicit" and self.name not in ("satquad",):
            raise ValueError(f"unknown builtin {self.name!r}")

    def kernel(self) -> RadialKernel | None:
        if self.kind != "conv":
            return None
        if self.monotone:
            return autocorr_kernel(self.radius)
        return bump_kernel(self.radius)

    def c2_bound(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "explicit":
            return abs(self.strength) * 3.0
        return abs(self.strength) * self.kernel().c2_norm()


def _mparts(m):
    if hasattr(m, "particles"):
        return np.asarray(m.particles, dtype=float), np.asarray(m.weights, dtype=float)
    pos, w = m
    return np.asarray(pos, dtype=float), np.asarray(w, dtype=float)


def _conv_eval(kernel, strength, pos, w, x, want_grad):
    x = np.asarray(x, dtype=float)
    d = x[..., None, :] - pos
    rr = np.linalg.norm(d, axis=-1)
    if not want_grad:
        return strength * np.sum(w * kernel.value(rr), axis=-1)
    dp = kernel.d1(rr)
    safe = np.where(rr > 1e-12, rr, 1.0)
    coef = np.where(rr > 1e-12, dp / safe, 0.0) * w
    return strength * np.sum(coef[..., None] * d, axis=-2)


def eval_coupling(cs: CouplingSpec, m, x):
    """F[m](x); x may be batched (..., n)."""
    x = np.asarray(x, dtype=float)
    if cs.kind == "zero":
        return np.zeros(x.shape[:-1])
    if cs.kind == "explicit":
        return builtin_cost(cs.name, cs.strength).value(x, 0.0)
    pos, w = _mparts(m)
    return _conv_eval(cs.kernel(), cs.strength, pos, w, x, False)


def coupling_grad(cs: CouplingSpec, m, x):
    x = np.asarray(x, dtype=float)
    if cs.kind == "zero":
        return np.zeros(x.shape)
    if cs.kind == "explicit":
        return builtin_cost(cs.name, cs.strength).grad(x, 0.0)
    pos, w = _mparts(m)
    return _conv_eval(cs.kernel(), cs.strength, pos, w, x, True)


def lipschitz_in_measure_check(cs: CouplingSpec, shifts=(0.5, 0.25, 0.1), n_eval: int = 64, seed: int = 0):
    """Measure sup_x |F[d_0] - F[d_he1]| / h against the declared bound.

    Returns dict with the measured ratio and the declared kernel Lipschitz
    constant times |strength|."""
    if cs.kind != "conv":
        return {"measured": 0.0, "declared": 0.0}
    kern = cs.kernel()
    rng = np.random.default_rng(seed)
    X = rng.uniform(-kern.support, kern.support, size=(n_eval, 3))
    one = np.ones(1)
    measured = 0.0
    for h in shifts:
        m1 = (np.zeros((1, 3)), one)
        m2 = (np.array([[h, 0.0, 0.0]]), one)
        d = np.abs(eval_coupling(cs, m1, X) - eval_coupling(cs, m2, X))
        measured = max(measured, float(np.max(d)) / h)
    return {"measured": measured, "declared": abs(cs.strength) * kern.lipschitz()}


# ---------------------------------------------------------------------------
# frozen costs f(x, t), g(x)
#
# kernel_pack() exports a flat description for the compiled/pure fast paths
# (Heisenberg d=1 only); None means the generic python path must be used.

_KIND_CONST = 1
_KIND_AFFINE = 2
_KIND_SATQUAD = 3


class FrozenCost:
    def value(self, x, t):
        raise NotImplementedError

    def grad(self, x, t):
        raise NotImplementedError

    def kernel_pack(self):
        return None

    def __add__(self, other):
        return SumCost((self, other))


def _empty_pack():
    return {
        "kinds": np.zeros(0, dtype=np.int64),
        "params": np.zeros((0, 6)),
        "conv": 0,
        "conv_par": np.zeros(6),
        "conv_pos": np.zeros((1, 0, 3)),
        "conv_w": np.zeros(0),
        "tab_dt": 1.0,
        "tab_v": np.zeros(2),
        "tab_d1": np.zeros(2),
        "tab_d2": np.zeros(2),
    }


class ZeroCost(FrozenCost):
    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def kernel_pack(self):
        return _empty_pack()


ZERO_COST = ZeroCost()


class ConstantCost(FrozenCost):
    def __init__(self, v):
        self.v = float(v)

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.v)

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def kernel_pack(self):
        p = _empty_pack()
        p["kinds"] = np.array([_KIND_CONST], dtype=np.int64)
        p["params"] = np.array([[self.v, 0, 0, 0, 0, 0]], dtype=float)
        return p


class AffineCost(FrozenCost):
    """c . x + b"""

    def __init__(self, c, b=0.0):
        self.c = np.asarray(c, dtype=float)
        self.b = float(b)

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        return x @ self.c + self.b

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.c, x.shape).copy()

    def kernel_pack(self):
        if len(self.c) != 3:
            return None
        p = _empty_pack()
        p["kinds"] = np.array([_KIND_AFFINE], dtype=np.int64)
        p["params"] = np.array([[self.c[0], self.c[1], self.c[2], self.b, 0, 0]], dtype=float)
        return p


class SatQuadCost(FrozenCost):
    """kappa * s / (1 + s) with s the squared norm of the first two slots.

    Bounded with bounded derivatives of all orders."""

    def __init__(self, kappa):
        self.kappa = float(kappa)

    def _s(self, x):
        k = min(2, x.shape[-1])
        return np.sum(x[..., :k] ** 2, axis=-1), k

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        s, _ = self._s(x)
        return self.kappa * s / (1.0 + s)

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        s, k = self._s(x)
        g = np.zeros(x.shape)
        g[..., :k] = self.kappa * (2.0 / (1.0 + s) ** 2)[..., None] * x[..., :k]
        return g

    def kernel_pack(self):
        p = _empty_pack()
        p["kinds"] = np.array([_KIND_SATQUAD], dtype=np.int64)
        p["params"] = np.array([[self.kappa, 0, 0, 0, 0, 0]], dtype=float)
        return p


def builtin_cost(name: str, strength: float) -> FrozenCost:
    if name == "satquad":
        return SatQuadCost(strength)
    raise ValueError(f"unknown builtin {name!r}")


class ConvCost(FrozenCost):
    """kappa (K * m_t)(x) frozen from a particle measure or measure path.

    positions has shape (1, P, n) for a static measure or (K+1, P, n) for a
    path sampled on the uniform grid t0 + k dt; queries between nodes
    interpolate particle positions linearly."""

    def __init__(self, kernel, strength, positions, weights, t0=0.0, dt=1.0):
        self.kern = kernel
        self.strength = float(strength)
        self.positions = np.ascontiguousarray(positions, dtype=float)
        if self.positions.ndim == 2:
            self.positions = self.positions[None, :, :]
        self.weights = np.ascontiguousarray(weights, dtype=float)
        self.t0 = float(t0)
        self.dt = float(dt)

    def _pos_at(self, t):
        K = self.positions.shape[0] - 1
        if K == 0:
            return self.positions[0]
        g = np.clip((t - self.t0) / self.dt, 0.0, K)
        i = min(int(g), K - 1)
        s = g - i
        return (1.0 - s) * self.positions[i] + s * self.positions[i + 1]

    def value(self, x, t):
        return _conv_eval(self.kern, self.strength, self._pos_at(t), self.weights, x, False)

    def grad(self, x, t):
        return _conv_eval(self.kern, self.strength, self._pos_at(t), self.weights, x, True)

    def kernel_pack(self):
        if self.positions.shape[-1] != 3:
            return None
        p = _empty_pack()
        tab_dt, V, D1, D2 = self.kern.tables()
        p["conv"] = 1
        p["conv_par"] = np.array(
            [self.strength, self.kern.support, self.t0, self.dt, float(self.positions.shape[0] - 1), 0.0]
        )
        p["conv_pos"] = self.positions
        p["conv_w"] = self.weights
        p["tab_dt"] = tab_dt
        p["tab_v"] = V
        p["tab_d1"] = D1
        p["tab_d2"] = D2
        return p


class SumCost(FrozenCost):
    def __init__(self, terms):
        flat = []
        for t in terms:
            if isinstance(t, SumCost):
                flat.extend(t.terms)
            elif not isinstance(t, ZeroCost):
                flat.append(t)
        self.terms = tuple(flat)

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for term in self.terms:
            out = out + term.value(x, t)
        return out

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for term in self.terms:
            out = out + term.grad(x, t)
        return out

    def kernel_pack(self):
        packs = [t.kernel_pack() for t in self.terms]
        if any(p is None for p in packs):
            return None
        out = _empty_pack()
        kinds, params = [], []
        for p in packs:
            kinds.append(p["kinds"])
            params.append(p["params"])
            if p["conv"]:
                if out["conv"]:
                    return None
                for key in ("conv", "conv_par", "conv_pos", "conv_w", "tab_dt", "tab_v", "tab_d1", "tab_d2"):
                    out[key] = p[key]
        out["kinds"] = np.concatenate(kinds) if kinds else out["kinds"]
        out["params"] = np.concatenate(params) if params else out["params"]
        return out


class CallableCost(FrozenCost):
    """Escape hatch wrapping (value, grad) callables; generic path only."""

    def __init__(self, value_fn, grad_fn):
        self._v = value_fn
        self._g = grad_fn

    def value(self, x, t):
        return self._v(np.asarray(x, dtype=float), t)

    def grad(self, x, t):
        return self._g(np.asarray(x, dtype=float), t)


def frozen_from_coupling(cs: CouplingSpec, m) -> FrozenCost:
    """F[m] as a time-independent frozen cost."""
    if cs.kind == "zero":
        return ZERO_COST
    if cs.kind == "explicit":
        return builtin_cost(cs.name, cs.strength)
    pos, w = _mparts(m)
    return ConvCost(cs.kernel(), cs.strength, pos, w)


def frozen_from_path(cs: CouplingSpec, times, positions, weights) -> FrozenCost:
    """f(x, t) = F[m_t](x) frozen from a measure path on a uniform grid."""
    if cs.kind == "zero":
        return ZERO_COST
    if cs.kind == "explicit":
        return builtin_cost(cs.name, cs.strength)
    times = np.asarray(times, dtype=float)
    dt = times[1] - times[0] if len(times) > 1 else 1.0
    return ConvCost(cs.kernel(), cs.strength, positions, weights, t0=times[0], dt=dt)
