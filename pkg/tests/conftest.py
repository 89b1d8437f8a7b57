import time

import numpy as np
import pytest

from hmfg import couplings, mfg, transport
from hmfg.geometry import heisenberg
from hmfg.hamiltonian import HamiltonianSpec


def equilibrium_problem(seed, time_steps=50):
    """The monotone-coupling reference configuration shared by the
    transport, fixed-point and certificate acceptance tests."""
    return mfg.MfgProblem(
        HamiltonianSpec(heisenberg(1), 2.0),
        couplings.CouplingSpec("conv", radius=1.0, strength=0.2, monotone=True),
        couplings.CouplingSpec("zero"),
        transport.M0Spec("uniform", 1.0, 3),
        particles=500,
        time_steps=time_steps,
        eps_schedule=(0.25, 0.1),
        tol=1e-3,
        max_iter=50,
        seed=seed,
        m0_seed=1234,
    )


def _timed_solve(seed):
    t0 = time.perf_counter()
    sol = mfg.solve_equilibrium(equilibrium_problem(seed))
    return {"solution": sol, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def eq_run():
    return _timed_solve(0)


@pytest.fixture(scope="session")
def eq_run_other_seed():
    return _timed_solve(1)


def corpus_costs(n):
    """Five cost configurations exercising every frozen-cost family."""
    rng = np.random.default_rng(99)
    cloud = rng.uniform(-1, 1, size=(40, n))
    w = np.full(40, 1.0 / 40)
    c1 = np.zeros(n)
    c1[0] = c1[1] = 1.0
    c2 = np.zeros(n)
    c2[0], c2[1] = 0.5, -0.5
    c3 = np.zeros(n)
    c3[0], c3[-1] = 0.2, 0.3
    configs = [
        ("terminal-affine", couplings.ZERO_COST, couplings.AffineCost(c1), 0.0),
        ("saturated-running", couplings.SatQuadCost(0.5), couplings.AffineCost(c2, 0.2), 0.1),
        ("affine-running", couplings.AffineCost(c3), couplings.SatQuadCost(0.8), 0.1),
        ("both-saturated", couplings.SatQuadCost(0.3), couplings.SatQuadCost(1.0), 0.5),
    ]
    if n == 3:
        kern = couplings.autocorr_kernel(1.0)
        conv = couplings.ConvCost(kern, 0.3, cloud[None, :, :], w)
        configs.append(("crowd-running", conv, couplings.AffineCost(c2), 0.1))
    else:
        configs.append(("mixed", couplings.SatQuadCost(0.4) + couplings.AffineCost(c1, -0.1),
                        couplings.AffineCost(c3), 0.2))
    return configs


def corpus_starts(n):
    starts = np.zeros((3, n))
    starts[1, :3] = (1.0, -0.5, 0.3)[:min(3, n)]
    starts[2, 0], starts[2, 1] = -1.2, 0.8
    if n > 2:
        starts[2, 2] = -0.6
    return starts
