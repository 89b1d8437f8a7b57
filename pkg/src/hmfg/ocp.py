"""Single-agent optimal control: PMP shooting, a direct-transcription
oracle, value function, and the feedback flow.

The costate convention is p(T) = -Dg(x(T)); along optimal arcs the control
is the feedback a = s(|q|) q with q = p B^eps(x), so H(x, p) = |q|^gamma
(one half |q|^2 at gamma = 2) minus the running cost drives both ODEs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmfg import _kernels as kernels
from hmfg.couplings import FrozenCost
from hmfg.geometry import matrix_B, matrix_B_grad
from hmfg.hamiltonian import HamiltonianSpec, _scale, control_cost, feedback_control

DEFAULT_STEPS = 200


class FlowError(RuntimeError):
    """Gradient evaluator failed during feedback-flow integration."""


@dataclass(frozen=True)
class ControlledPath:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def steps(self):
        return len(self.times) - 1


@dataclass(frozen=True)
class CostateSolution:
    path: ControlledPath
    costates: np.ndarray
    cost: float
    shooting_residual: float
    p0: np.ndarray
    converged: bool
    iterations: int
    epsilon: float


def cost(path: ControlledPath, f: FrozenCost, g: FrozenCost, gamma: float = 2.0):
    """Trapezoidal quadrature of the running cost plus the terminal cost."""
    spec_like = _GammaOnly(gamma)
    run = control_cost(spec_like, path.controls)
    run = run + np.array([f.value(path.states[k], t) for k, t in enumerate(path.times)])
    dt = path.times[1] - path.times[0] if path.steps else 0.0
    quad = dt * (0.5 * (run[0] + run[-1]) + run[1:-1].sum()) if path.steps else 0.0
    return float(quad + g.value(path.states[-1], path.T))


class _GammaOnly:
    """Duck-typed stand-in so control_cost works without a structure."""

    def __init__(self, gamma):
        self.gamma = gamma

    @property
    def gamma_conjugate(self):
        if self.gamma == 1.0:
            return np.inf
        return self.gamma / (self.gamma - 1.0)


def pmp_rhs(x, p, t, f: FrozenCost, spec: HamiltonianSpec):
    """Coupled state/costate vector field; batched over leading axes."""
    st = spec.structure
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    B = matrix_B(st, x)
    dB = matrix_B_grad(st, x)
    q = np.einsum("...i,...ij->...j", p, B)
    s, _ = _scale(spec, np.linalg.norm(q, axis=-1))
    dx = s[..., None] * np.einsum("...jb,...b->...j", B, q)
    dp = -s[..., None] * np.einsum("...kjb,...j,...b->...k", dB, p, q) + f.grad(x, t)
    return dx, dp


def _kernel_eligible(spec: HamiltonianSpec, pack):
    st = spec.structure
    return st.tag == "heisenberg1" and st.trunc is None and pack is not None


def integrate_pmp(x0, p0, t0, T, f: FrozenCost, spec: HamiltonianSpec,
                  steps: int = DEFAULT_STEPS, store_path: bool = True, pack=None):
    """RK4 on the PMP system from (x0, p0); returns (states, costates).

    x0/p0 may carry leading batch axes on the generic path; the compiled
    fast path handles single Heisenberg starts with packable costs."""
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    dt = (T - t0) / steps
    if x0.ndim == 1:
        if pack is None:
            pack = f.kernel_pack()
        if _kernel_eligible(spec, pack):
            return kernels.pmp_integrate(x0, p0, t0, dt, steps, spec.epsilon,
                                         spec.gamma, pack, store_path)
    x, p = x0, p0
    if store_path:
        xs = np.empty((steps + 1,) + x0.shape)
        ps = np.empty_like(xs)
        xs[0], ps[0] = x, p
    for k in range(steps):
        t = t0 + k * dt
        k1x, k1p = pmp_rhs(x, p, t, f, spec)
        k2x, k2p = pmp_rhs(x + 0.5 * dt * k1x, p + 0.5 * dt * k1p, t + 0.5 * dt, f, spec)
        k3x, k3p = pmp_rhs(x + 0.5 * dt * k2x, p + 0.5 * dt * k2p, t + 0.5 * dt, f, spec)
        k4x, k4p = pmp_rhs(x + dt * k3x, p + dt * k3p, t + dt, f, spec)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if store_path:
            xs[k + 1], ps[k + 1] = x, p
    if store_path:
        return xs, ps
    return x, p


def _assemble(spec, f, g, t0, T, steps, xs, ps, p0, residual, converged, iterations):
    times = t0 + (T - t0) * np.arange(steps + 1) / steps
    controls = feedback_control(spec, xs, ps)
    path = ControlledPath(times, xs, controls)
    return CostateSolution(path, ps, cost(path, f, g, spec.gamma), residual,
                           np.asarray(p0, dtype=float), converged, iterations, spec.epsilon)


def solve_pmp_shooting(x0, t0, f: FrozenCost, g: FrozenCost, spec: HamiltonianSpec,
                       init=None, T: float = 1.0, steps: int = DEFAULT_STEPS,
                       tol: float = 1e-10, max_iter: int = 40, fd_step: float = 1e-6):
    """Newton shooting on p(t0) for the two-point system; the terminal
    defect is p(T) + Dg(x(T)).  Non-convergence is reported, not raised."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    pack = f.kernel_pack()
    p0 = np.zeros(n) if init is None else np.array(init, dtype=float)

    def defect(p_init):
        xT, pT = integrate_pmp(x0, p_init, t0, T, f, spec, steps, store_path=False, pack=pack)
        return pT + g.grad(xT, T)

    r = defect(p0)
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(r)) < tol:
            break
        J = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = fd_step
            J[:, i] = (defect(p0 + e) - r) / fd_step
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        base = np.max(np.abs(r))
        for _ in range(12):
            r_new = defect(p0 + lam * step)
            if np.max(np.abs(r_new)) < base:
                break
            lam *= 0.5
        p0 = p0 + lam * step
        r = r_new
    residual = float(np.max(np.abs(r)))
    xs, ps = integrate_pmp(x0, p0, t0, T, f, spec, steps, store_path=True, pack=pack)
    return _assemble(spec, f, g, t0, T, steps, xs, ps, p0, residual, residual < tol, it)


def _init_bank(x0, g, spec, T):
    n = len(x0)
    bank = [np.zeros(n), -np.asarray(g.grad(np.asarray(x0, dtype=float), T), dtype=float)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        bank.append(e.copy())
        bank.append(-e)
    return bank


def pmp_multistart(x0, t0, f: FrozenCost, g: FrozenCost, spec: HamiltonianSpec,
                   T: float = 1.0, steps: int = DEFAULT_STEPS, extra_inits=(),
                   dedup_tol: float = 1e-6, **kw):
    """Shooting from {0, -Dg(x0), +-e_i} plus extras.  Returns deduplicated
    solutions, converged first, then by (cost, lexicographic p0)."""
    sols = []
    for init in list(_init_bank(x0, g, spec, T)) + [np.asarray(v, dtype=float) for v in extra_inits]:
        sol = solve_pmp_shooting(x0, t0, f, g, spec, init=init, T=T, steps=steps, **kw)
        dup = False
        for other in sols:
            if sol.converged and other.converged and \
                    np.max(np.abs(sol.p0 - other.p0)) <= dedup_tol * (1.0 + np.max(np.abs(other.p0))):
                dup = True
                break
        if not dup:
            sols.append(sol)
    sols.sort(key=lambda s: (not s.converged, s.cost, tuple(s.p0)))
    return sols


def solve_direct(x0, t0, f: FrozenCost, g: FrozenCost, spec: HamiltonianSpec,
                 control_bound: float = 3.0, T: float = 1.0, steps: int = 100,
                 restarts: int = 20, iters: int = 150, seed: int = 0, init=None):
    """Projected gradient descent over piecewise-constant controls in the
    box |a_i| <= control_bound; midpoint (RK2) rollout with its exact
    discrete adjoint.  Independent of the PMP machinery by construction."""
    if spec.gamma == 1.0:
        raise ValueError("direct transcription needs a differentiable control cost (gamma > 1)")
    st = spec.structure
    x0 = np.asarray(x0, dtype=float)
    n, mc = st.n, spec.control_dim
    dt = (T - t0) / steps
    gc = spec.gamma_conjugate
    rng = np.random.default_rng(seed)

    A = rng.uniform(-0.5 * control_bound, 0.5 * control_bound, size=(restarts, steps, mc))
    A[0] = 0.0
    if init is not None:
        A[min(1, restarts - 1)] = np.clip(init, -control_bound, control_bound)

    def ctrl_run(a):
        na = np.linalg.norm(a, axis=-1)
        return 0.5 * na**gc

    def rollout(A):
        R = A.shape[0]
        xs = np.empty((R, steps + 1, n))
        ms = np.empty((R, steps, n))
        xs[:, 0] = x0
        J = np.zeros(R)
        for k in range(steps):
            xk = xs[:, k]
            ak = A[:, k]
            v0 = np.einsum("rjb,rb->rj", matrix_B(st, xk), ak)
            m = xk + 0.5 * dt * v0
            ms[:, k] = m
            xs[:, k + 1] = xk + dt * np.einsum("rjb,rb->rj", matrix_B(st, m), ak)
            J += dt * (ctrl_run(ak) + f.value(xk, t0 + k * dt))
        J += g.value(xs[:, -1], T)
        return xs, ms, J

    def gradient(A, xs, ms):
        R = A.shape[0]
        G = np.empty_like(A)
        lam = np.asarray(g.grad(xs[:, -1], T), dtype=float).copy()
        for k in range(steps - 1, -1, -1):
            xk, m, ak = xs[:, k], ms[:, k], A[:, k]
            Bk = matrix_B(st, xk)
            Bm = matrix_B(st, m)
            Jk = np.einsum("rkjb,rb->rjk", matrix_B_grad(st, xk), ak)
            Jm = np.einsum("rkjb,rb->rjk", matrix_B_grad(st, m), ak)
            na = np.linalg.norm(ak, axis=-1)
            safe = np.where(na > 1e-300, na, 1.0)
            dL = (0.5 * gc) * np.where(na > 1e-300, safe ** (gc - 2.0), 0.0)[:, None] * ak
            dxda = dt * (Bm + 0.5 * dt * np.einsum("rjk,rkb->rjb", Jm, Bk))
            G[:, k] = dt * dL + np.einsum("rjb,rj->rb", dxda, lam)
            JmT_lam = np.einsum("rjk,rj->rk", Jm, lam)
            lam = lam + dt * (JmT_lam + 0.5 * dt * np.einsum("rjk,rj->rk", Jk, JmT_lam))
            lam += dt * np.asarray(f.grad(xk, t0 + k * dt), dtype=float)
        return G

    xs, ms, J = rollout(A)
    lr = np.full(restarts, 0.5)
    for _ in range(iters):
        G = gradient(A, xs, ms)
        cand = np.clip(A - lr[:, None, None] * G, -control_bound, control_bound)
        xs2, ms2, J2 = rollout(cand)
        better = J2 <= J
        A[better] = cand[better]
        xs[better], ms[better], J[better] = xs2[better], ms2[better], J2[better]
        lr = np.where(better, lr * 1.3, lr * 0.5)
        lr = np.clip(lr, 1e-8, 10.0)
    b = int(np.argmin(J))
    times = t0 + (T - t0) * np.arange(steps + 1) / steps
    ctl = np.vstack([A[b], A[b, -1:]])
    return ControlledPath(times, xs[b], ctl)


def value(x, t, f: FrozenCost, g: FrozenCost, spec: HamiltonianSpec,
          T: float = 1.0, steps: int = DEFAULT_STEPS, include_direct: bool = True,
          seed: int = 0, direct_kwargs=None, multistart_kwargs=None):
    """Best cost over PMP multi-start candidates, optionally floored by the
    direct oracle.  Bulk property sweeps disable the oracle for speed; the
    acceptance corpus keeps both routes and compares them."""
    sols = pmp_multistart(x, t, f, g, spec, T=T, steps=steps, **(multistart_kwargs or {}))
    vals = [s.cost for s in sols if s.converged]
    if include_direct:
        path = solve_direct(x, t, f, g, spec, T=T, seed=seed, **(direct_kwargs or {}))
        vals.append(cost(path, f, g, spec.gamma))
    if not vals:
        raise RuntimeError("no OCP candidate converged")
    return float(min(vals))


def feedback_flow(x0, u_grad, spec: HamiltonianSpec, t0: float = 0.0,
                  T: float = 1.0, steps: int = DEFAULT_STEPS):
    """Integrates x' = B^eps(x) a with a = feedback(x, -Du(x, s)) for a
    given gradient field evaluator u_grad(x, s) -> Du."""
    st = spec.structure
    x = np.asarray(x0, dtype=float)
    dt = (T - t0) / steps
    xs = np.empty((steps + 1,) + x.shape)
    ctls = np.empty((steps + 1,) + x.shape[:-1] + (spec.control_dim,))
    xs[0] = x

    def vel(y, s):
        try:
            du = np.asarray(u_grad(y, s), dtype=float)
        except Exception as exc:
            raise FlowError(f"gradient evaluator failed at t={s}: {exc}") from exc
        a = feedback_control(spec, y, -du)
        return np.einsum("...jb,...b->...j", matrix_B(st, y), a), a

    for k in range(steps + 1):
        s = t0 + k * dt
        v1, a1 = vel(x, s)
        ctls[k] = a1
        if k == steps:
            break
        v2, _ = vel(x + 0.5 * dt * v1, s + 0.5 * dt)
        v3, _ = vel(x + 0.5 * dt * v2, s + 0.5 * dt)
        v4, _ = vel(x + dt * v3, s + dt)
        x = x + dt / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        xs[k + 1] = x
    times = t0 + (T - t0) * np.arange(steps + 1) / steps
    return ControlledPath(times, xs, ctls)


@dataclass(frozen=True)
class BatchShooting:
    p0: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    converged: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray


def shoot_batch(x0s, t0, f: FrozenCost, g: FrozenCost, spec: HamiltonianSpec,
                T: float = 1.0, steps: int = 50, p0_init=None, tol: float = 1e-8,
                max_iter: int = 30, fd_step: float = 1e-6):
    """Per-particle Newton shooting with a chord Jacobian (recomputed only
    when a damped step fails to reduce the defect).  p0_init warm-starts
    from a previous outer iteration."""
    x0s = np.asarray(x0s, dtype=float)
    P, n = x0s.shape
    pack = f.kernel_pack()
    out_p0 = np.empty((P, n))
    out_x = np.empty((P, steps + 1, n))
    out_p = np.empty((P, steps + 1, n))
    conv = np.zeros(P, dtype=bool)
    res = np.empty(P)
    its = np.zeros(P, dtype=np.int64)

    for i in range(P):
        x0 = x0s[i]
        p0 = (-np.asarray(g.grad(x0, T), dtype=float)) if p0_init is None else np.array(p0_init[i], dtype=float)

        def defect(pi):
            xT, pT = integrate_pmp(x0, pi, t0, T, f, spec, steps, store_path=False, pack=pack)
            return pT + g.grad(xT, T)

        def jac(pi, r0):
            J = np.empty((n, n))
            for d in range(n):
                e = np.zeros(n)
                e[d] = fd_step
                J[:, d] = (defect(pi + e) - r0) / fd_step
            return J

        r = defect(p0)
        J = None
        it = 0
        for it in range(1, max_iter + 1):
            base = np.max(np.abs(r))
            if base < tol:
                break
            if J is None:
                J = jac(p0, r)
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            lam, r_new = 1.0, None
            for _ in range(10):
                r_new = defect(p0 + lam * step)
                if np.max(np.abs(r_new)) < base:
                    break
                lam *= 0.5
            if np.max(np.abs(r_new)) >= base:
                if J is not None and it > 1:
                    J = jac(p0, r)  # chord went stale; refresh and retry once
                    continue
            if np.max(np.abs(r_new)) > 0.5 * base:
                J = None  # slow progress: force a fresh Jacobian next round
            p0 = p0 + lam * step
            r = r_new
        out_p0[i] = p0
        res[i] = float(np.max(np.abs(r)))
        conv[i] = res[i] < tol
        its[i] = it
        out_x[i], out_p[i] = integrate_pmp(x0, p0, t0, T, f, spec, steps, store_path=True, pack=pack)
    return BatchShooting(out_p0, out_x, out_p, conv, res, its)


@dataclass(frozen=True)
class UniquenessReport:
    tau: float
    agree_before: float
    sup_after: float
    tol: float
    passed: bool
    applicable: bool


def uniqueness_after_start_check(sol1: CostateSolution, sol2: CostateSolution,
                                 tau: float, tol: float = 1e-6) -> UniquenessReport:
    """Two optimal arcs from one start must coincide past tau (needs the
    completed dynamics: refuses eps = 0)."""
    if sol1.epsilon == 0.0 or sol2.epsilon == 0.0:
        raise ValueError("uniqueness after the initial time requires eps != 0")
    t = sol1.path.times
    if len(t) != len(sol2.path.times) or np.max(np.abs(t - sol2.path.times)) > 1e-12:
        raise ValueError("paths must share one time grid")
    d = np.max(np.abs(sol1.path.states - sol2.path.states), axis=-1)
    before = d[t <= tau]
    after = d[t >= tau]
    agree_before = float(before.max()) if len(before) else 0.0
    sup_after = float(after.max()) if len(after) else 0.0
    applicable = agree_before <= tol
    return UniquenessReport(tau, agree_before, sup_after, tol,
                            bool(not applicable or sup_after <= tol), applicable)


def dynamics_defect(path: ControlledPath, spec: HamiltonianSpec):
    """Max trapezoid defect of x' = B^eps(x) a over the stored nodes;
    O(dt^3) per step for smooth arcs."""
    st = spec.structure
    v = np.einsum("kjb,kb->kj", matrix_B(st, path.states), path.controls)
    dt = np.diff(path.times)[:, None]
    d = path.states[1:] - path.states[:-1] - 0.5 * dt * (v[1:] + v[:-1])
    return float(np.max(np.abs(d))) if len(d) else 0.0
