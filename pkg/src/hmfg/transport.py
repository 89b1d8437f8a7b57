"""Particle representation of the measure flow: sampling of m0, Lagrangian
pushforward along the feedback flow, kernel density estimates, moments, and
Wasserstein-1 distances (exact assignment below 2000 particles, sliced with
a flag above).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from hmfg import ocp
from hmfg.couplings import bump_kernel
from hmfg.hamiltonian import HamiltonianSpec

EXACT_W1_LIMIT = 2000
_SLICE_DIRECTIONS = 64
_SLICE_SEED = 714025


@dataclass(frozen=True)
class ParticleMeasure:
    particles: np.ndarray
    weights: np.ndarray
    kde_bandwidth: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.particles, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 2 or len(pts) < 1:
            raise ValueError("particle array must be (count, dim) with count >= 1")
        if w.shape != (len(pts),) or np.any(w < 0.0):
            raise ValueError("weights must be nonnegative, one per particle")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "particles", pts)
        object.__setattr__(self, "weights", w)

    @property
    def count(self):
        return len(self.particles)

    @property
    def dim(self):
        return self.particles.shape[1]


@dataclass(frozen=True)
class M0Spec:
    """Compactly supported initial density: 'uniform' on [-radius, radius]^dim
    or the quartic 'bump' profile (3-d only) on |x| <= radius."""
    kind: str = "uniform"
    radius: float = 1.0
    dim: int = 3
    center: tuple = None

    def __post_init__(self):
        if self.kind not in ("uniform", "bump"):
            raise ValueError(f"unknown m0 preset {self.kind!r}")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.kind == "bump" and self.dim != 3:
            raise ValueError("bump preset is 3-dimensional")
        c = np.zeros(self.dim) if self.center is None else np.asarray(self.center, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError("center dimension mismatch")
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        y = x - np.asarray(self.center)
        if self.kind == "uniform":
            inside = np.all(np.abs(y) <= self.radius, axis=-1)
            return inside / (2.0 * self.radius) ** self.dim
        rr = np.linalg.norm(y, axis=-1)
        return bump_kernel(self.radius).value(rr)


def silverman_bandwidth(points):
    """(4/(d+2))^{1/(d+4)} sigma count^{-1/(d+4)} with sigma the root mean
    per-axis standard deviation."""
    pts = np.asarray(points, dtype=float)
    P, d = pts.shape
    if P < 2:
        return 1.0
    sigma = float(np.sqrt(np.mean(np.var(pts, axis=0))))
    if sigma == 0.0:
        return 1e-12
    return (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * sigma * P ** (-1.0 / (d + 4.0))


def sample_initial(m0_spec: M0Spec, count: int, seed: int = 0) -> ParticleMeasure:
    """Equal-weight rejection sampling inside the support box; aborts when
    the acceptance rate degenerates."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    c = np.asarray(m0_spec.center)
    r = m0_spec.radius
    if m0_spec.kind == "uniform":
        pts = c + rng.uniform(-r, r, size=(count, m0_spec.dim))
    else:
        peak = float(bump_kernel(r).value(np.zeros(1))[0])
        pts = np.empty((count, 3))
        have, drawn = 0, 0
        while have < count:
            chunk = max(4 * (count - have), 256)
            cand = c + rng.uniform(-r, r, size=(chunk, 3))
            u = rng.uniform(0.0, peak, size=chunk)
            keep = cand[u < m0_spec.density(cand)]
            take = min(len(keep), count - have)
            pts[have:have + take] = keep[:take]
            have += take
            drawn += chunk
            if drawn >= 1000 and have / drawn < 1e-3:
                raise RuntimeError("rejection sampling acceptance rate below 1e-3")
    w = np.full(count, 1.0 / count)
    return ParticleMeasure(pts, w, silverman_bandwidth(pts))


@dataclass(frozen=True)
class MeasurePath:
    times: np.ndarray
    measures: tuple
    provenance: tuple  # one ControlledPath per particle

    def __post_init__(self):
        K = len(self.times) - 1
        if len(self.measures) != K + 1:
            raise ValueError("one measure per time node required")
        for i, arc in enumerate(self.provenance):
            if arc.states.shape[0] != K + 1:
                raise ValueError(f"arc {i} node count mismatch")
        arc_states = np.stack([arc.states for arc in self.provenance])
        for k, m in enumerate(self.measures):
            if not np.array_equal(m.particles, arc_states[:, k]):
                raise ValueError(f"measure node {k} disagrees with the arcs")

    @property
    def particle_count(self):
        return self.measures[0].count

    def positions(self):
        """(levels, count, dim) array view of all particle positions."""
        return np.stack([m.particles for m in self.measures])

    def d1_audit(self):
        """Rows (t, d1 to the previous node, exact flag); first row d1 = 0."""
        rows = [(float(self.times[0]), 0.0, True)]
        for k in range(1, len(self.times)):
            d, exact = wasserstein1_info(self.measures[k - 1], self.measures[k])
            rows.append((float(self.times[k]), d, exact))
        return rows


def path_from_states(times, states, weights, controls=None) -> MeasurePath:
    """MeasurePath from per-particle node positions (count, levels, dim)."""
    states = np.asarray(states, dtype=float)
    P, K1, n = states.shape
    times = np.asarray(times, dtype=float)
    if controls is None:
        controls = np.zeros((P, K1, n))
    measures = tuple(
        ParticleMeasure(states[:, k], weights, silverman_bandwidth(states[:, k]))
        for k in range(K1)
    )
    arcs = tuple(ocp.ControlledPath(times, states[i], controls[i]) for i in range(P))
    return MeasurePath(times, measures, arcs)


def pushforward(m: ParticleMeasure, u_grad, spec: HamiltonianSpec, grid) -> MeasurePath:
    """Transports every particle along the feedback flow of the given
    gradient field; weights are carried unchanged."""
    grid = np.asarray(grid, dtype=float)
    steps = len(grid) - 1
    dt = np.diff(grid)
    if steps >= 1 and np.max(np.abs(dt - dt[0])) > 1e-12:
        raise ValueError("pushforward needs a uniform time grid")
    flow = ocp.feedback_flow(m.particles, u_grad, spec, t0=float(grid[0]),
                             T=float(grid[-1]), steps=max(steps, 1))
    states = np.ascontiguousarray(np.swapaxes(flow.states, 0, 1))
    controls = np.ascontiguousarray(np.swapaxes(flow.controls, 0, 1))
    if steps == 0:
        states, controls = states[:, :1], controls[:, :1]
    return path_from_states(grid, states, m.weights, controls)


def kde_density(m: ParticleMeasure, x):
    """Gaussian product-kernel estimate at x (batched over leading axes)."""
    h = m.kde_bandwidth
    if h <= 0.0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x, dtype=float)
    d = x[..., None, :] - m.particles
    expo = -0.5 * np.sum(d * d, axis=-1) / h**2
    norm = (2.0 * np.pi * h**2) ** (-m.dim / 2.0)
    return norm * np.sum(m.weights * np.exp(expo), axis=-1)


def _w1_1d(a, wa, b, wb):
    ia = np.argsort(a, kind="stable")
    ib = np.argsort(b, kind="stable")
    a, wa = a[ia], wa[ia]
    b, wb = b[ib], wb[ib]
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    levels = np.unique(np.concatenate([ca, cb]))
    prev = np.concatenate([[0.0], levels[:-1]])
    mid = 0.5 * (levels + prev)
    va = a[np.minimum(np.searchsorted(ca, mid), len(a) - 1)]
    vb = b[np.minimum(np.searchsorted(cb, mid), len(b) - 1)]
    return float(np.sum((levels - prev) * np.abs(va - vb)))


def wasserstein1_info(m1: ParticleMeasure, m2: ParticleMeasure):
    """(d1, exact?) with the exact assignment branch for equal-weight clouds
    up to EXACT_W1_LIMIT and the sliced approximation beyond."""
    p1, w1 = m1.particles, m1.weights
    p2, w2 = m2.particles, m2.weights
    equal_weight = (
        len(p1) == len(p2)
        and np.allclose(w1, 1.0 / len(p1), rtol=0.0, atol=1e-12)
        and np.allclose(w2, 1.0 / len(p2), rtol=0.0, atol=1e-12)
    )
    if equal_weight and len(p1) <= EXACT_W1_LIMIT:
        D = np.linalg.norm(p1[:, None, :] - p2[None, :, :], axis=-1)
        ri, ci = linear_sum_assignment(D)
        return float(D[ri, ci].mean()), True
    rng = np.random.default_rng(_SLICE_SEED)
    dirs = rng.normal(size=(_SLICE_DIRECTIONS, p1.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [_w1_1d(p1 @ u, w1, p2 @ u, w2) for u in dirs]
    return float(np.mean(vals)), False


def wasserstein1(m1: ParticleMeasure, m2: ParticleMeasure):
    return wasserstein1_info(m1, m2)[0]


def moments(m: ParticleMeasure):
    """(first absolute moment, second moment) of |x|."""
    r = np.linalg.norm(m.particles, axis=1)
    return float(np.dot(m.weights, r)), float(np.dot(m.weights, r**2))


def holder_fit(path: MeasurePath):
    """K = max d1(m_k, m_{k+1}) / sqrt(dt) over consecutive nodes, plus the
    audit rows it came from."""
    rows = path.d1_audit()
    dts = np.diff(path.times)
    K = 0.0
    for (t, d, _), dt in zip(rows[1:], dts):
        K = max(K, d / np.sqrt(dt))
    return {"constant": K, "rows": rows}
