"""Equilibrium fixed point: damped fictitious play over measure paths.

One iterate is a population of arcs (one per particle).  The best response
re-solves every particle against the frozen couplings; damping adopts a
theta_k subset of the new arcs, theta_k = 2/(k+2), so the first iteration
is a full replacement.  Residual = sup over checkpoint nodes of the exact
d1 between the iterate and its best response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hmfg import ocp, transport
from hmfg.couplings import CouplingSpec, frozen_from_coupling, frozen_from_path
from hmfg.geometry import check_hypotheses
from hmfg.hamiltonian import HamiltonianSpec, feedback_control
from hmfg.transport import M0Spec, MeasurePath, ParticleMeasure

RESIDUAL_CHECKPOINTS = 21


@dataclass(frozen=True)
class MfgProblem:
    hamiltonian: HamiltonianSpec
    F: CouplingSpec
    G: CouplingSpec
    m0: M0Spec
    T: float = 1.0
    particles: int = 500
    time_steps: int = 50
    eps_schedule: tuple = (0.5, 0.25, 0.1, 0.05)
    tol: float = 1e-3
    max_iter: int = 50
    seed: int = 0
    m0_seed: int = 1234

    @property
    def structure(self):
        return self.hamiltonian.structure

    def __post_init__(self):
        if self.T <= 0.0 or self.particles < 1 or self.time_steps < 1:
            raise ValueError("T, particles and time_steps must be positive")
        sched = tuple(float(e) for e in self.eps_schedule)
        if not sched or any(e <= 0.0 for e in sched):
            raise ValueError("eps schedule must be positive (the eps = 0 system is a limit, not a run)")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        object.__setattr__(self, "eps_schedule", sched)
        if self.tol <= 0.0 or self.max_iter < 1:
            raise ValueError("tol and max_iter must be positive")
        check_hypotheses(self.structure)  # raises StructureError on violation

    def times(self):
        return self.T * np.arange(self.time_steps + 1) / self.time_steps


@dataclass
class MfgSolution:
    measure_path: MeasurePath
    residual_history: list
    epsilon: float
    status: str
    per_eps: list
    frozen_f: object
    frozen_g: object
    spec: HamiltonianSpec
    problem: MfgProblem
    arc_p0: np.ndarray
    equilibrium_gap: dict | None = None

    def value(self, x, t, **kw):
        """u(x, t) against the frozen equilibrium couplings."""
        kw.setdefault("steps", self.problem.time_steps)
        return ocp.value(x, t, self.frozen_f, self.frozen_g, self.spec,
                         T=self.problem.T, **kw)


def _freeze(problem: MfgProblem, times, states, weights):
    """(f, g) induced by the measure path with node positions states."""
    pos = np.ascontiguousarray(np.swapaxes(states, 0, 1))  # (levels, P, n)
    f = frozen_from_path(problem.F, times, pos, weights)
    g = frozen_from_coupling(problem.G, (pos[-1], weights))
    return f, g


def _checkpoints(n_nodes):
    if n_nodes <= RESIDUAL_CHECKPOINTS:
        return np.arange(n_nodes)
    return np.unique(np.linspace(0, n_nodes - 1, RESIDUAL_CHECKPOINTS).astype(int))


def _sup_d1(states_a, states_b, weights, nodes):
    worst = 0.0
    for k in nodes:
        ma = ParticleMeasure(states_a[:, k], weights, 1.0)
        mb = ParticleMeasure(states_b[:, k], weights, 1.0)
        d, _ = transport.wasserstein1_info(ma, mb)
        worst = max(worst, d)
    return worst


def apply_T(problem: MfgProblem, m_path: MeasurePath, epsilon: float,
            p0_init=None, return_batch: bool = False):
    """Best response against a frozen measure path: per-particle shooting,
    then the pushforward measure path of the new arcs."""
    spec = problem.hamiltonian.with_epsilon(epsilon)
    times = np.asarray(m_path.times, dtype=float)
    states = np.swapaxes(m_path.positions(), 0, 1)  # (P, levels, n)
    weights = m_path.measures[0].weights
    f, g = _freeze(problem, times, states, weights)
    x0s = m_path.measures[0].particles
    bs = ocp.shoot_batch(x0s, float(times[0]), f, g, spec, T=float(times[-1]),
                         steps=len(times) - 1, p0_init=p0_init)
    if not np.all(bs.converged):
        bad = int(np.sum(~bs.converged))
        raise RuntimeError(f"best response failed on {bad} particle(s); worst defect {bs.residuals.max():.3e}")
    controls = feedback_control(spec, bs.states, bs.costates)
    new_path = transport.path_from_states(times, bs.states, weights, controls)
    if return_batch:
        return new_path, bs
    return new_path


def solve_equilibrium(problem: MfgProblem) -> MfgSolution:
    """Fictitious play across the eps schedule; warm-starts each level with
    the previous level's costates; returns the smallest-eps solution."""
    m0 = transport.sample_initial(problem.m0, problem.particles, problem.m0_seed)
    times = problem.times()
    K1 = problem.time_steps + 1
    P = problem.particles
    n = problem.structure.n
    # every level runs completed (eps > 0), so the control dimension is fixed
    mc = problem.hamiltonian.with_epsilon(problem.eps_schedule[0]).control_dim

    states = np.repeat(m0.particles[:, None, :], K1, axis=1)
    controls = np.zeros((P, K1, mc))
    p0 = None
    rng = np.random.default_rng(problem.seed)
    nodes = _checkpoints(K1)

    history = []
    per_eps = []
    status = "max_iter"
    for eps in problem.eps_schedule:
        spec = problem.hamiltonian.with_epsilon(eps)
        level = {"epsilon": eps, "residuals": [], "converged": False}
        best = None
        for it in range(problem.max_iter):
            f, g = _freeze(problem, times, states, m0.weights)
            bs = ocp.shoot_batch(m0.particles, 0.0, f, g, spec, T=problem.T,
                                 steps=problem.time_steps, p0_init=p0)
            if not np.all(bs.converged):
                bad = int(np.sum(~bs.converged))
                raise RuntimeError(f"best response failed on {bad} particle(s) at eps={eps}")
            br_controls = feedback_control(spec, bs.states, bs.costates)
            residual = _sup_d1(states, bs.states, m0.weights, nodes)
            history.append({"epsilon": eps, "iteration": it, "residual": residual})
            level["residuals"].append(residual)
            p0 = bs.p0
            if best is None or residual < best[0]:
                best = (residual, states.copy(), controls.copy())
            if residual < problem.tol:
                level["converged"] = True
                break
            theta = 2.0 / (it + 2.0)
            count = max(1, int(round(theta * P)))
            idx = rng.choice(P, size=count, replace=False) if count < P else np.arange(P)
            states[idx] = bs.states[idx]
            controls[idx] = br_controls[idx]
        if not level["converged"]:
            states, controls = best[1], best[2]
        level["final_residual"] = level["residuals"][-1] if level["residuals"] else float("nan")
        level["path"] = transport.path_from_states(times, states, m0.weights, controls)
        per_eps.append(level)
        status = "converged" if level["converged"] else "max_iter"

    eps_final = problem.eps_schedule[-1]
    spec = problem.hamiltonian.with_epsilon(eps_final)
    f, g = _freeze(problem, times, states, m0.weights)
    path = transport.path_from_states(times, states, m0.weights, controls)
    return MfgSolution(path, history, eps_final, status, per_eps, f, g, spec,
                       problem, p0 if p0 is not None else np.zeros((P, n)))


def mild_certificate(sol: MfgSolution, probes=None, count: int = 50,
                     gap_tol: float = 1e-2, beat_tol: float = 1e-4,
                     direct_kwargs=None):
    """Optimality gaps J(arc) - u(start, 0) against the frozen equilibrium
    costs.  Arcs should achieve the value: max gap small, no gap materially
    below zero."""
    P = sol.measure_path.particle_count
    if probes is None:
        probes = np.unique(np.linspace(0, P - 1, min(count, P)).astype(int))
    probes = np.asarray(probes, dtype=int)
    dk = {"restarts": 6, "iters": 120, "steps": sol.problem.time_steps}
    dk.update(direct_kwargs or {})
    f, g, spec = sol.frozen_f, sol.frozen_g, sol.spec
    rows = []
    for i in probes:
        arc = sol.measure_path.provenance[i]
        x0 = arc.states[0]
        j_arc = ocp.cost(arc, f, g, spec.gamma)
        u = ocp.value(x0, 0.0, f, g, spec, T=sol.problem.T, steps=sol.problem.time_steps,
                      multistart_kwargs={"extra_inits": [sol.arc_p0[i]]},
                      direct_kwargs=dk)
        rows.append({"particle": int(i), "arc_cost": j_arc, "value": u, "gap": j_arc - u})
    gaps = np.array([r["gap"] for r in rows]) if rows else np.zeros(0)
    report = {
        "count": len(rows),
        "max_gap": float(gaps.max()) if len(gaps) else 0.0,
        "mean_gap": float(gaps.mean()) if len(gaps) else 0.0,
        "min_gap": float(gaps.min()) if len(gaps) else 0.0,
        "gap_tol": gap_tol,
        "beat_tol": beat_tol,
        "passed": bool(len(gaps) == 0 or (gaps.max() <= gap_tol and gaps.min() >= -beat_tol)),
        "vacuous": len(rows) == 0,
        "rows": rows,
    }
    sol.equilibrium_gap = report
    return report
