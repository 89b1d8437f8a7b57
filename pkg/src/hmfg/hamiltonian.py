"""Power-family Hamiltonians H(x, p) built from a field matrix.

With q = p B^eps(x):  gamma = 2 gives H = |q|^2 / 2, and 1 <= gamma < 2
gives H = |q|^gamma (normalization kept as stated, without the 1/2).  The
drift is the exact p-gradient of that choice, so the two regimes are each
internally consistent with their own feedback law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import HTypeStructure, matrix_B, matrix_B_grad

__all__ = [
    "HamiltonianSpec",
    "SINGULAR_TOL",
    "hamiltonian",
    "drift",
    "drift_info",
    "control_cost",
    "feedback_control",
    "legendre_gap",
]

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class HamiltonianSpec:
    structure: HTypeStructure
    gamma: float = 2.0

    def __post_init__(self):
        if not (1.0 <= self.gamma <= 2.0):
            raise ValueError(f"gamma must lie in [1, 2], got {self.gamma}")

    @property
    def gamma_conjugate(self) -> float:
        if self.gamma == 1.0:
            return math.inf
        return self.gamma / (self.gamma - 1.0)

    @property
    def epsilon(self) -> float:
        return self.structure.epsilon

    @property
    def control_dim(self) -> int:
        return self.structure.control_dim

    def with_epsilon(self, epsilon: float) -> "HamiltonianSpec":
        return HamiltonianSpec(self.structure.with_epsilon(epsilon), self.gamma)


def _q(spec: HamiltonianSpec, x, p):
    B = matrix_B(spec.structure, x)
    p = np.asarray(p, dtype=float)
    return np.einsum("...i,...ij->...j", p, B), B


def hamiltonian(spec: HamiltonianSpec, x, p):
    q, _ = _q(spec, x, p)
    nq = np.linalg.norm(q, axis=-1)
    if spec.gamma == 2.0:
        return 0.5 * nq**2
    return nq**spec.gamma


def _scale(spec: HamiltonianSpec, nq):
    """Factor s(|q|) with dH = s * q . d(q); zero inside the singular ball."""
    if spec.gamma == 2.0:
        return np.ones_like(nq), np.zeros(nq.shape, dtype=bool)
    singular = nq <= SINGULAR_TOL
    safe = np.where(singular, 1.0, nq)
    return np.where(singular, 0.0, spec.gamma * safe ** (spec.gamma - 2.0)), singular


def drift(spec: HamiltonianSpec, x, p):
    """dH/dp.  For gamma < 2 with |p B(x)| below SINGULAR_TOL the gradient is
    singular and the zero vector is returned (see drift_info for the flag)."""
    return drift_info(spec, x, p)[0]


def drift_info(spec: HamiltonianSpec, x, p):
    q, B = _q(spec, x, p)
    s, singular = _scale(spec, np.linalg.norm(q, axis=-1))
    v = np.einsum("...ij,...j->...i", B, q)
    return s[..., None] * v, singular


def feedback_control(spec: HamiltonianSpec, x, p):
    """Optimal control a*(x, p) realizing the drift: dx = B^eps(x) a*."""
    q, _ = _q(spec, x, p)
    s, _ = _scale(spec, np.linalg.norm(q, axis=-1))
    return s[..., None] * q


def control_cost(spec: HamiltonianSpec, a):
    """Running control cost (1/2)|a|^gamma'.

    gamma = 1 means gamma' = inf; the implemented convention is the
    pointwise limit: 0 on the closed unit ball, +inf outside.
    """
    a = np.asarray(a, dtype=float)
    na = np.linalg.norm(a, axis=-1)
    gc = spec.gamma_conjugate
    if math.isinf(gc):
        return np.where(na <= 1.0, 0.0, np.inf)
    return 0.5 * na**gc


def legendre_gap(spec: HamiltonianSpec, x, p, radius: float = 3.0, points: int = 61):
    """Grid check of H(x,p) >= sup_a [-p.B a - cost(a)] at gamma = 2.

    Returns (H, grid maximum).  The gap vanishes as the grid refines; used
    by the validation suite, only meaningful for the quadratic case."""
    q, _ = _q(spec, x, p)
    mc = q.shape[-1]
    ax = np.linspace(-radius, radius, points)
    grids = np.meshgrid(*([ax] * mc), indexing="ij")
    A = np.stack([g.ravel() for g in grids], axis=-1)
    vals = -(A @ q) - 0.5 * np.sum(A**2, axis=-1)
    return float(hamiltonian(spec, x, p)), float(np.max(vals))
