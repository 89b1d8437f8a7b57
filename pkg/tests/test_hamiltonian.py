import math

import numpy as np
import pytest

from hmfg import hamiltonian as hm
from hmfg.geometry import degenerate, grushin, heisenberg, matrix_B
from hmfg.hamiltonian import HamiltonianSpec

from oracles import fd_gradient


def spec(eps=0.0, gamma=2.0, st=None):
    return HamiltonianSpec(st if st is not None else heisenberg(1, epsilon=eps), gamma)


def test_quadratic_hamiltonian_pinned():
    # H(x, p) = |pB|^2 / 2; at x = (0,0,0), B has orthonormal columns
    s = spec()
    assert hm.hamiltonian(s, np.zeros(3), np.array([3.0, 4.0, 5.0])) == pytest.approx(12.5)
    # p pointing along the vertical kernel direction costs nothing
    assert hm.hamiltonian(s, np.zeros(3), np.array([0.0, 0.0, 7.0])) == pytest.approx(0.0)


def test_vertical_momentum_activated_by_completion():
    s = spec(eps=0.5)
    assert hm.hamiltonian(s, np.zeros(3), np.array([0.0, 0.0, 7.0])) == pytest.approx(0.5 * 0.25 * 49.0)


def test_gamma_conjugate():
    assert spec(gamma=2.0).gamma_conjugate == pytest.approx(2.0)
    assert spec(gamma=1.5).gamma_conjugate == pytest.approx(3.0)
    assert math.isinf(spec(gamma=1.0).gamma_conjugate)
    with pytest.raises(ValueError):
        HamiltonianSpec(heisenberg(1), 0.9)
    with pytest.raises(ValueError):
        HamiltonianSpec(heisenberg(1), 2.1)


def test_control_dim_tracks_completion():
    assert spec().control_dim == 2
    assert spec(eps=0.1).control_dim == 3
    assert HamiltonianSpec(heisenberg(2, epsilon=0.1), 2.0).control_dim == 5
    assert spec().with_epsilon(0.2).control_dim == 3
    assert spec(eps=0.2).with_epsilon(0.0).control_dim == 2


@pytest.mark.parametrize("gamma", [2.0, 1.5, 1.0])
@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_drift_is_momentum_gradient(gamma, eps):
    s = spec(eps=eps, gamma=gamma)
    rng = np.random.default_rng(7)
    for _ in range(25):
        x = rng.uniform(-2, 2, 3)
        p = rng.uniform(-2, 2, 3)
        q = p @ matrix_B(s.structure, x)
        if np.linalg.norm(q) < 0.3:  # keep clear of the gamma < 2 kink
            continue
        v = hm.drift(s, x, p)
        fd = fd_gradient(lambda pp: float(hm.hamiltonian(s, x, pp)), p)
        np.testing.assert_allclose(v, fd, rtol=2e-6, atol=2e-8)


def test_drift_batched_matches_scalar():
    s = spec(eps=0.2, gamma=1.5)
    rng = np.random.default_rng(8)
    X = rng.uniform(-2, 2, size=(30, 3))
    P = rng.uniform(-2, 2, size=(30, 3))
    batch = hm.drift(s, X, P)
    rows = np.array([hm.drift(s, X[i], P[i]) for i in range(30)])
    np.testing.assert_allclose(batch, rows, atol=1e-14)


@pytest.mark.parametrize("st", [heisenberg(1, epsilon=0.2), grushin(epsilon=0.2),
                                degenerate(4, 2, epsilon=0.2), heisenberg(2, epsilon=0.2)])
def test_feedback_realizes_drift(st):
    s = HamiltonianSpec(st, 2.0)
    rng = np.random.default_rng(9)
    X = rng.uniform(-2, 2, size=(40, st.n))
    P = rng.uniform(-2, 2, size=(40, st.n))
    a = hm.feedback_control(s, X, P)
    assert a.shape == (40, s.control_dim)
    B = matrix_B(st, X)
    np.testing.assert_allclose(np.einsum("kij,kj->ki", B, a), hm.drift(s, X, P), atol=1e-13)


def test_feedback_vanishes_at_singularity():
    s = spec(eps=0.0, gamma=1.5)
    a = hm.feedback_control(s, np.zeros(3), np.array([0.0, 0.0, 5.0]))
    np.testing.assert_allclose(a, 0.0, atol=0)


def test_control_cost_conventions():
    assert hm.control_cost(spec(gamma=2.0), np.array([3.0, 4.0])) == pytest.approx(12.5)
    # gamma = 1.5 has conjugate exponent 3
    assert hm.control_cost(spec(gamma=1.5), np.array([2.0, 0.0])) == pytest.approx(4.0)
    # gamma = 1 is the unit-ball indicator
    g1 = spec(gamma=1.0)
    assert hm.control_cost(g1, np.array([0.6, 0.8])) == 0.0
    assert hm.control_cost(g1, np.array([0.6, 0.81])) == np.inf


def test_hamiltonian_nonnegative_and_noncoercive():
    s = spec()
    rng = np.random.default_rng(10)
    X = rng.uniform(-2, 2, size=(100, 3))
    P = rng.uniform(-5, 5, size=(100, 3))
    H = hm.hamiltonian(s, X, P)
    assert np.all(H >= 0.0)
    # growing the vertical momentum alone never grows H
    P2 = P.copy()
    P2[:, 2] *= 100.0
    x0 = np.zeros((100, 3))
    np.testing.assert_allclose(hm.hamiltonian(s, x0, P2[:, [0, 1, 2]] * [0, 0, 1]), 0.0, atol=0)


def test_legendre_gap_small_on_grid():
    s = spec(eps=0.1)
    rng = np.random.default_rng(11)
    for _ in range(5):
        x = rng.uniform(-1, 1, 3)
        p = rng.uniform(-1, 1, 3)
        H, sup = hm.legendre_gap(s, x, p)
        assert sup <= H + 1e-9
        assert H - sup < 5e-3
