import numpy as np
import pytest

from hmfg import geometry
from hmfg.geometry import (
    HTypeStructure,
    StructureError,
    apply_field,
    apply_field_bracket,
    check_hypotheses,
    degenerate,
    from_table,
    group_inverse,
    group_op,
    grushin,
    h_norm,
    heisenberg,
    matrix_B,
    matrix_B_grad,
    psi,
    psi_prime,
    psi_second,
)

from oracles import group_product_reference


def test_group_product_pinned():
    out = group_op(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
    np.testing.assert_allclose(out, [5.0, 7.0, 6.0], atol=0)


def test_group_product_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y = rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3)
        np.testing.assert_allclose(group_op(x, y), group_product_reference(x, y), atol=1e-14)


def test_group_axioms():
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, size=(128, 3))
    y = rng.uniform(-2, 2, size=(128, 3))
    z = rng.uniform(-2, 2, size=(128, 3))
    lhs = group_op(group_op(x, y), z)
    rhs = group_op(x, group_op(y, z))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    np.testing.assert_allclose(group_op(x, group_inverse(x)), 0.0, atol=1e-12)
    np.testing.assert_allclose(group_op(x, np.zeros(3)), x, atol=0)


def test_group_noncommutative():
    x, y = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    assert not np.allclose(group_op(x, y), group_op(y, x))


def test_gauge_norm_homogeneous():
    # dilation (x1, x2, x3) -> (r x1, r x2, r^2 x3) scales the norm by r
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, size=(64, 3))
    for r in (0.5, 2.0, 3.7):
        dil = np.stack([r * x[:, 0], r * x[:, 1], r * r * x[:, 2]], axis=-1)
        np.testing.assert_allclose(h_norm(dil), r * h_norm(x), rtol=1e-12)


def test_matrix_b_pinned():
    st = heisenberg(1)
    B = matrix_B(st, np.array([1.5, -2.0, 0.7]))
    np.testing.assert_allclose(B, [[1.0, 0.0], [0.0, 1.0], [2.0, 1.5]], atol=0)


def test_matrix_b_epsilon_completion():
    st = heisenberg(1, epsilon=0.2)
    B = matrix_B(st, np.array([1.5, -2.0, 0.7]))
    assert B.shape == (3, 3)
    np.testing.assert_allclose(B[:, 2], [0.0, 0.0, 0.2], atol=0)


def test_matrix_b_grad_matches_fd():
    rng = np.random.default_rng(3)
    for st in (heisenberg(1, epsilon=0.1), grushin(), degenerate(4, 2), heisenberg(2)):
        x = rng.uniform(-2, 2, st.n)
        dB = matrix_B_grad(st, x)
        for k in range(st.n):
            e = np.zeros(st.n)
            e[k] = 1e-6
            fd = (matrix_B(st, x + e) - matrix_B(st, x - e)) / 2e-6
            np.testing.assert_allclose(dB[k], fd, atol=1e-9)


def test_bracket_is_twice_vertical_derivative():
    # [X1, X2]u = 2 du/dx3 for the pinned horizontal fields
    st = heisenberg(1)
    rng = np.random.default_rng(4)
    X = rng.uniform(-2, 2, size=(100, 3))

    def grad_u(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([x2 * x3, x1 * x3 + 3 * x2**2, x1 * x2 + 1.0], axis=-1)

    def hess_u(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        H = np.zeros(x.shape[:-1] + (3, 3))
        H[..., 0, 1] = H[..., 1, 0] = x3
        H[..., 0, 2] = H[..., 2, 0] = x2
        H[..., 1, 2] = H[..., 2, 1] = x1
        H[..., 1, 1] = 6 * x2
        return H

    br = apply_field_bracket(st, 0, 1, grad_u, hess_u, X)
    np.testing.assert_allclose(br, 2.0 * grad_u(X)[:, 2], atol=1e-13)


def test_horizontal_fields_pinned():
    # X1 u = u_x1 - x2 u_x3, X2 u = u_x2 + x1 u_x3 at a sample point
    st = heisenberg(1)
    x = np.array([0.5, -1.0, 2.0])
    g = np.array([1.0, 2.0, 3.0])
    assert apply_field(st, 0, lambda _: g, x) == pytest.approx(1.0 - (-1.0) * 3.0)
    assert apply_field(st, 1, lambda _: g, x) == pytest.approx(2.0 + 0.5 * 3.0)


def test_truncation_properties():
    N = 2.0
    xi = np.linspace(-5 * N, 5 * N, 4001)
    ps = psi(xi, N)
    assert np.all(np.abs(ps) <= 2.0 * N)
    inner = np.abs(xi) <= N
    np.testing.assert_array_equal(ps[inner], xi[inner])
    np.testing.assert_allclose(psi(-xi, N), -ps, atol=0)
    outer = np.abs(xi) >= 2.0 * N
    assert np.ptp(np.abs(ps[outer])) == 0.0
    assert np.all(psi_prime(xi[outer], N) == 0.0)


def test_truncation_derivatives_match_fd():
    N = 1.3
    xi = np.linspace(-3.5 * N, 3.5 * N, 701)
    # third derivative jumps at the joints, so keep the stencil clear of them
    xi = xi[(np.abs(np.abs(xi) - N) > 1e-3) & (np.abs(np.abs(xi) - 2 * N) > 1e-3)]
    h = 1e-6
    fd1 = (psi(xi + h, N) - psi(xi - h, N)) / (2 * h)
    np.testing.assert_allclose(psi_prime(xi, N), fd1, atol=1e-7)
    fd2 = (psi_prime(xi + h, N) - psi_prime(xi - h, N)) / (2 * h)
    np.testing.assert_allclose(psi_second(xi, N), fd2, atol=1e-5)


def test_truncation_second_derivative_continuous_at_joints():
    N = 1.3
    for j in (N, 2 * N):
        left = psi_second(np.nextafter(j, 0.0), N)
        right = psi_second(np.nextafter(j, 10.0), N)
        assert abs(left - right) < 1e-9


def test_truncated_structure_bounds_coefficients():
    st = heisenberg(1, trunc=1.5)
    far = np.array([50.0, -80.0, 3.0])
    B = matrix_B(st, far)
    assert np.abs(B).max() <= 2.0 * 1.5


def test_presets_shapes():
    assert (heisenberg(1).n, heisenberg(1).m) == (3, 2)
    assert (heisenberg(2).n, heisenberg(2).m) == (5, 4)
    assert (grushin().n, grushin().m) == (2, 2)
    assert (degenerate(4, 2).n, degenerate(4, 2).m) == (4, 2)


def test_control_columns_follow_epsilon():
    assert matrix_B(heisenberg(1), np.zeros(3)).shape[1] == 2
    assert matrix_B(heisenberg(1, epsilon=0.3), np.zeros(3)).shape[1] == 3
    assert matrix_B(heisenberg(2, epsilon=0.3), np.zeros(5)).shape[1] == 5


def test_hypothesis_report_on_presets():
    # violations raise; a returned report carries the measured constants
    for st in (heisenberg(1), heisenberg(1, epsilon=0.5), grushin(), degenerate(5, 3)):
        rep = check_hypotheses(st)
        assert rep.h11 == 1.0
        assert np.isfinite(rep.lipschitz_estimate)
        assert rep.designated_sup <= 2.0 * rep.box + 1e-12


def test_table_structure_rejects_bad_dependence():
    # row i < m may only read coordinates strictly before i
    with pytest.raises(StructureError):
        from_table(3, 2, [
            {"row": 1, "col": 1, "const": 1.0},
            {"row": 2, "col": 2, "weights": {2: 1.0}},
        ])


def test_from_table_reproduces_heisenberg():
    st = from_table(3, 2, [
        {"row": 1, "col": 1, "const": 1.0},
        {"row": 2, "col": 2, "const": 1.0},
        {"row": 3, "col": 1, "weights": {2: -1.0}},
        {"row": 3, "col": 2, "weights": {1: 1.0}},
    ])
    check_hypotheses(st)
    rng = np.random.default_rng(5)
    x = rng.uniform(-2, 2, size=(16, 3))
    np.testing.assert_allclose(matrix_B(st, x), matrix_B(heisenberg(1), x), atol=0)
