"""Heisenberg group operations and Heisenberg-type control structures.

The structure of interest is a rectangular field matrix B(x) (n x m, m <= n)
with a lower-triangular dependence pattern: the first row is a nonzero
constant, row i (i <= m) reads only x_1..x_{i-1}, and rows below the m-th
read only x_1..x_m.  The epsilon-completion appends n - m constant columns
epsilon * e_{m+1..n}, which makes B^eps (B^eps)^T invertible for eps != 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "StructureError",
    "Coefficient",
    "HTypeStructure",
    "HypothesisReport",
    "group_op",
    "group_inverse",
    "h_norm",
    "matrix_B",
    "matrix_B_grad",
    "psi",
    "psi_prime",
    "psi_second",
    "apply_field",
    "apply_field_product",
    "apply_field_bracket",
    "check_hypotheses",
    "heisenberg",
    "grushin",
    "degenerate",
    "from_table",
]


class StructureError(ValueError):
    """Raised when a coefficient table violates the triangular pattern."""


# ---------------------------------------------------------------------------
# group operations on R^3

def group_op(x, y):
    """Noncommutative product: (x + y)_{1,2}, x3 + y3 - x2*y1 + x1*y2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = x + y
    out[..., 2] = x[..., 2] + y[..., 2] - x[..., 1] * y[..., 0] + x[..., 0] * y[..., 1]
    return out


def group_inverse(x):
    """Group inverse is the negation (the twist term is antisymmetric)."""
    return -np.asarray(x, dtype=float)


def h_norm(x):
    """Homogeneous gauge norm ((x1^2 + x2^2)^2 + x3^2)^(1/4)."""
    x = np.asarray(x, dtype=float)
    planar = x[..., 0] ** 2 + x[..., 1] ** 2
    return (planar**2 + x[..., 2] ** 2) ** 0.25


# ---------------------------------------------------------------------------
# C^2 cutoff used to truncate coefficient growth
#
# Identity on [-N, N], zero beyond 2N, odd, with the bridge on [N, 2N] given
# by the quintic q(s) = 1 + s - 16 s^3 + 23 s^4 - 9 s^5 in s = (|xi| - N)/N.
# Matches value/slope/curvature at both ends, 0 <= psi(xi) <= xi for xi >= 0,
# and |psi'|, N*|psi''| are bounded by constants that do not depend on N.

def _bridge(s):
    return 1.0 + s + s**3 * (-16.0 + s * (23.0 - 9.0 * s))


def _bridge_d1(s):
    return 1.0 + s**2 * (-48.0 + s * (92.0 - 45.0 * s))


def _bridge_d2(s):
    return s * (-96.0 + s * (276.0 - 180.0 * s))


def psi(xi, N):
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    s = np.clip((a - N) / N, 0.0, 1.0)
    out = np.where(a <= N, xi, np.sign(xi) * N * _bridge(s))
    return np.where(a >= 2.0 * N, 0.0, out)


def psi_prime(xi, N):
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    s = np.clip((a - N) / N, 0.0, 1.0)
    out = np.where(a <= N, 1.0, _bridge_d1(s))
    return np.where(a >= 2.0 * N, 0.0, out)


def psi_second(xi, N):
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    s = np.clip((a - N) / N, 0.0, 1.0)
    out = np.where(a <= N, 0.0, np.sign(xi) * _bridge_d2(s) / N)
    return np.where(a >= 2.0 * N, 0.0, out)


# ---------------------------------------------------------------------------
# coefficient table

@dataclass(frozen=True)
class Coefficient:
    """One entry h_ij of the field matrix.

    value maps x of shape (..., n) to shape (...); grad maps to (..., n).
    slots lists the zero-based coordinates the entry is allowed to read.
    """

    value: Callable
    grad: Callable
    slots: tuple[int, ...] = ()


def const_coeff(v: float, n: int) -> Coefficient:
    v = float(v)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], v)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (n,))

    return Coefficient(value, grad, ())


def linear_coeff(weights: dict[int, float], n: int) -> Coefficient:
    """h(x) = sum_k w_k x_k over the given zero-based slots."""
    slots = tuple(sorted(int(k) for k in weights))
    w = np.zeros(n)
    for k, v in weights.items():
        w[int(k)] = float(v)

    def value(x):
        x = np.asarray(x, dtype=float)
        return x @ w

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(w, x.shape[:-1] + (n,)).copy()

    return Coefficient(value, grad, slots)


def _truncated(c: Coefficient, N: float) -> Coefficient:
    def value(x):
        return psi(c.value(x), N)

    def grad(x):
        return psi_prime(c.value(x), N)[..., None] * c.grad(x)

    return Coefficient(value, grad, c.slots)


def _allowed_slots(i: int, m: int) -> tuple[int, ...]:
    if i < m:
        return tuple(range(i))
    return tuple(range(m))


@dataclass(frozen=True)
class HTypeStructure:
    """Field matrix B(x) with the triangular dependence pattern.

    coeffs maps zero-based (row, col) to a Coefficient; absent entries are
    zero.  epsilon > 0 switches every operation to the completed square
    matrix B^eps.  trunc = N applies the cutoff psi_N to every coefficient
    value (derivatives follow by the chain rule).
    """

    n: int
    m: int
    coeffs: tuple = ()
    epsilon: float = 0.0
    trunc: float | None = None
    tag: str = ""

    def __post_init__(self):
        if not (1 <= self.m <= self.n):
            raise StructureError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")
        if self.epsilon < 0.0:
            raise StructureError("epsilon must be >= 0")
        seen = set()
        has_h00 = False
        for i, j, c in self.coeffs:
            if not (0 <= i < self.n and 0 <= j < self.m):
                raise StructureError(f"entry ({i},{j}) outside the n x m block")
            if i < self.m and j > i:
                raise StructureError(f"entry ({i},{j}) violates the triangular pattern")
            if (i, j) in seen:
                raise StructureError(f"duplicate entry ({i},{j})")
            bad = set(c.slots) - set(_allowed_slots(i, self.m))
            if bad:
                raise StructureError(f"entry ({i},{j}) declares forbidden slots {sorted(bad)}")
            seen.add((i, j))
            if (i, j) == (0, 0):
                has_h00 = True
        if not has_h00:
            raise StructureError("h_11 must be present (nonzero constant)")

    @property
    def control_dim(self) -> int:
        return self.n if self.epsilon > 0.0 else self.m

    def with_epsilon(self, epsilon: float) -> "HTypeStructure":
        return HTypeStructure(self.n, self.m, self.coeffs, float(epsilon), self.trunc, self.tag)

    def with_truncation(self, N: float | None) -> "HTypeStructure":
        return HTypeStructure(self.n, self.m, self.coeffs, self.epsilon, N, self.tag)

    def _entries(self):
        if self.trunc is None:
            return self.coeffs
        return tuple((i, j, _truncated(c, self.trunc)) for i, j, c in self.coeffs)


def matrix_B(s: HTypeStructure, x):
    """B(x) of shape (..., n, m), or the completed (..., n, n) when eps > 0."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != s.n:
        raise ValueError(f"state dimension {x.shape[-1]} != n={s.n}")
    mc = s.control_dim
    B = np.zeros(x.shape[:-1] + (s.n, mc))
    for i, j, c in s._entries():
        B[..., i, j] = c.value(x)
    if s.epsilon > 0.0:
        for k in range(s.m, s.n):
            B[..., k, k] = s.epsilon
    return B


def matrix_B_grad(s: HTypeStructure, x):
    """dB/dx of shape (..., n, n, m_c): entry [..., k, i, j] = d B_ij / d x_k."""
    x = np.asarray(x, dtype=float)
    mc = s.control_dim
    dB = np.zeros(x.shape[:-1] + (s.n, s.n, mc))
    for i, j, c in s._entries():
        dB[..., :, i, j] = c.grad(x)
    return dB


# ---------------------------------------------------------------------------
# first and second order action of the generator fields

def apply_field(s: HTypeStructure, j: int, grad_u, x):
    """(X_j u)(x) = sum_i B_ij(x) du/dx_i, with grad_u(x) -> (..., n)."""
    B = matrix_B(s, x)
    g = np.asarray(grad_u(x), dtype=float)
    return np.sum(B[..., :, j] * g, axis=-1)


def apply_field_product(s: HTypeStructure, a: int, b: int, grad_u, hess_u, x):
    """(X_a (X_b u))(x) given exact gradient and Hessian evaluators."""
    x = np.asarray(x, dtype=float)
    B = matrix_B(s, x)
    dB = matrix_B_grad(s, x)
    g = np.asarray(grad_u(x), dtype=float)
    H = np.asarray(hess_u(x), dtype=float)
    # sum_i B_ia [ sum_j (d_i B_jb) u_j + sum_j B_jb u_ij ]
    t1 = np.einsum("...i,...ij->...j", B[..., :, a], dB[..., :, :, b])
    t2 = np.einsum("...i,...ij->...j", B[..., :, a], H)
    return np.sum(t1 * g, axis=-1) + np.sum(t2 * B[..., :, b], axis=-1)


def apply_field_bracket(s: HTypeStructure, a: int, b: int, grad_u, hess_u, x):
    """([X_a, X_b] u)(x) = X_a(X_b u) - X_b(X_a u)."""
    return apply_field_product(s, a, b, grad_u, hess_u, x) - apply_field_product(
        s, b, a, grad_u, hess_u, x
    )


# ---------------------------------------------------------------------------
# hypothesis audit

@dataclass
class HypothesisReport:
    h11: float
    lipschitz_estimate: float
    hessian_estimate: float
    designated_sup: float
    designated_linear_ratio: float
    degenerate_fraction: float
    samples: int
    box: float
    notes: list = field(default_factory=list)


def check_hypotheses(s: HTypeStructure, box: float = 2.0, samples: int = 200, seed: int = 0):
    """Audit the structure on random samples in [-box, box]^n.

    Pattern violations (nonconstant or vanishing h_11, dependence on a
    forbidden slot) raise StructureError.  Growth and regularity constants
    are measured and reported, not asserted.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-box, box, size=(samples, s.n))
    entries = s._entries()

    vals = {(i, j): c.value(X) for i, j, c in entries}
    h11 = vals[(0, 0)]
    if float(np.ptp(h11)) > 1e-10 * (1.0 + float(np.max(np.abs(h11)))):
        raise StructureError("h_11 is not constant on samples")
    if abs(float(h11[0])) < 1e-12:
        raise StructureError("h_11 vanishes")

    # numeric slot audit: perturbing a forbidden coordinate must not move the value
    delta = 0.37 * box + 0.11
    for i, j, c in entries:
        allowed = set(_allowed_slots(i, s.m))
        for k in range(s.n):
            if k in allowed:
                continue
            Xp = X.copy()
            Xp[:, k] += delta
            dv = np.max(np.abs(c.value(Xp) - vals[(i, j)]))
            if dv > 1e-9 * (1.0 + np.max(np.abs(vals[(i, j)]))):
                raise StructureError(f"entry ({i},{j}) reads forbidden slot {k}")

    # (H4)-type constants from analytic gradients and FD curvature
    lip = 0.0
    hess = 0.0
    h = 1e-4
    for i, j, c in entries:
        G = c.grad(X)
        lip = max(lip, float(np.max(np.linalg.norm(G, axis=-1))))
        for k in c.slots:
            Xp = X.copy()
            Xp[:, k] += h
            Xm = X.copy()
            Xm[:, k] -= h
            d2 = (c.value(Xp) - 2.0 * vals[(i, j)] + c.value(Xm)) / h**2
            hess = max(hess, float(np.max(np.abs(d2))))

    # designated rows: one-based i <= min(n-1, m)
    designated = min(s.n - 1, s.m)
    sup = 0.0
    ratio = 0.0
    for i, j, c in entries:
        if i + 1 > designated:
            continue
        v = np.abs(vals[(i, j)])
        sup = max(sup, float(np.max(v)))
        growth = 1.0 + np.sum(np.abs(X[:, : s.m]), axis=1)
        ratio = max(ratio, float(np.max(v / growth)))

    # degeneracy of the product of the diagonal entries
    prod = np.ones(samples)
    for i in range(s.m):
        prod *= vals.get((i, i), np.zeros(samples))
    scale = 1.0 + float(np.max(np.abs(prod)))
    frac = float(np.mean(np.abs(prod) <= 1e-12 * scale))

    return HypothesisReport(
        h11=float(h11[0]),
        lipschitz_estimate=lip,
        hessian_estimate=hess,
        designated_sup=sup,
        designated_linear_ratio=ratio,
        degenerate_fraction=frac,
        samples=samples,
        box=box,
    )


# ---------------------------------------------------------------------------
# presets

def heisenberg(d: int = 1, epsilon: float = 0.0, trunc: float | None = None) -> HTypeStructure:
    """R^{2d+1} with identity block and last row (-x_{d+1..2d}, x_{1..d})."""
    n = 2 * d + 1
    m = 2 * d
    coeffs = [(i, i, const_coeff(1.0, n)) for i in range(m)]
    for j in range(d):
        coeffs.append((m, j, linear_coeff({d + j: -1.0}, n)))
        coeffs.append((m, d + j, linear_coeff({j: 1.0}, n)))
    tag = "heisenberg1" if d == 1 else f"heisenberg{d}"
    return HTypeStructure(n, m, tuple(coeffs), float(epsilon), trunc, tag)


def grushin(epsilon: float = 0.0) -> HTypeStructure:
    """State space R^2, B = [[1, 0], [0, x1]]."""
    coeffs = (
        (0, 0, const_coeff(1.0, 2)),
        (1, 1, linear_coeff({0: 1.0}, 2)),
    )
    return HTypeStructure(2, 2, coeffs, float(epsilon), None, "grushin")


def degenerate(n: int, m: int, epsilon: float = 0.0) -> HTypeStructure:
    """Identity block over m controls, zero rows below: B = [I_m; 0]."""
    coeffs = tuple((i, i, const_coeff(1.0, n)) for i in range(m))
    return HTypeStructure(n, m, coeffs, float(epsilon), None, f"degenerate{n}{m}")


def from_table(n: int, m: int, entries, epsilon: float = 0.0, trunc: float | None = None) -> HTypeStructure:
    """Build a structure from a list of entry dicts.

    Each entry: {"row": i, "col": j} (one-based) plus either
    {"const": v} or {"weights": {slot: w, ...}} (one-based slots).
    """
    coeffs = []
    for e in entries:
        i = int(e["row"]) - 1
        j = int(e["col"]) - 1
        if "const" in e:
            c = const_coeff(float(e["const"]), n)
        elif "weights" in e:
            w = {int(k) - 1: float(v) for k, v in e["weights"].items()}
            c = linear_coeff(w, n)
        else:
            raise StructureError(f"entry ({i + 1},{j + 1}) needs 'const' or 'weights'")
        coeffs.append((i, j, c))
    return HTypeStructure(n, m, tuple(coeffs), float(epsilon), trunc, "table")
