from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbilift import numeric as nm
from orbilift.errors import EvaluationError, NonSquare
from orbilift.expr import parse_map

small = st.integers(-3, 3)
square2 = st.lists(st.lists(small, min_size=2, max_size=2), min_size=2, max_size=2)
square3 = st.lists(st.lists(small, min_size=3, max_size=3), min_size=3, max_size=3)


def ex(rows):
    return nm.as_array(rows, nm.EXACT)


def test_fixed_subspace_identity_is_everything():
    s = nm.fixed_subspace(ex([[1, 0], [0, 1]]), nm.EXACT)
    assert s.rank == 2 and nm.codimension(s) == 0


def test_fixed_subspace_reflection_axis():
    s = nm.fixed_subspace(ex([[1, 0], [0, -1]]), nm.EXACT)
    assert s.rank == 1
    v = s.basis[0]
    assert v[1] == 0 and v[0] != 0


def test_fixed_subspace_minus_identity_is_zero():
    assert nm.fixed_subspace(ex([[-1, 0], [0, -1]]), nm.EXACT).rank == 0


def test_fixed_subspace_non_square():
    with pytest.raises(NonSquare):
        nm.fixed_subspace(ex([[1, 0, 0], [0, 1, 0]]), nm.EXACT)


def test_codimension_examples():
    assert nm.codimension(nm.Subspace(2, tuple(ex([[1, 0], [0, 1]])))) == 0
    assert nm.codimension(nm.Subspace(2, (ex([1, 0]),))) == 1
    assert nm.codimension(nm.Subspace(3, ())) == 3


def test_fixed_subspace_approx_mode():
    c, s = np.cos(2 * np.pi / 5), np.sin(2 * np.pi / 5)
    assert nm.fixed_subspace(np.array([[c, -s], [s, c]]), nm.APPROX).rank == 0


def test_jacobian_linear():
    A = np.array([[1.0, 2.0], [-3.0, 0.5]])
    J = nm.jacobian_fd(lambda x: A @ x, [0.3, -1.2])
    assert np.allclose(J, A, atol=1e-9)


def test_jacobian_square_map():
    f = parse_map(["x*x", "y"], 2)
    J = nm.jacobian_fd(f, [1.0, 0.0], 1e-5)
    assert np.allclose(J, [[2, 0], [0, 1]], atol=1e-6)


def test_jacobian_rotation():
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(nm.jacobian_fd(lambda x: R @ x, [3.0, 4.0]), R, atol=1e-9)


def test_jacobian_undefined_probe():
    f = parse_map(["sqrt(x)", "y"], 2)
    with pytest.raises(EvaluationError):
        nm.jacobian_fd(f, [0.0, 0.0])


def test_parse_scalar_modes():
    assert nm.parse_scalar("3/4", True) == Fraction(3, 4)
    assert nm.parse_scalar("0.25", False) == 0.25
    with pytest.raises(ValueError):
        nm.parse_scalar("0.5", True)


@settings(max_examples=60, deadline=None)
@given(square3)
def test_fixed_vectors_are_fixed_exactly(rows):
    g = ex(rows)
    s = nm.fixed_subspace(g, nm.EXACT)
    for v in s.basis:
        assert all(x == y for x, y in zip(g @ v, v))


@settings(max_examples=60, deadline=None)
@given(square3)
def test_rank_plus_codimension(rows):
    s = nm.fixed_subspace(ex(rows), nm.EXACT)
    assert s.rank + nm.codimension(s) == 3
    if s.basis:
        assert nm.rank(np.array(s.basis, dtype=object), nm.EXACT) == s.rank


@settings(max_examples=40, deadline=None)
@given(square2, st.lists(small, min_size=2, max_size=2),
       st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_jacobian_of_quadratics(Q, b, u):
    # f_i(x) = x^T Q_i x + b_i x_i with Q_0 = Q, Q_1 = Q^T
    Q = np.array(Q, dtype=float)
    b = np.array(b, dtype=float)

    def f(x):
        return np.array([x @ Q @ x + b[0] * x[0], x @ Q.T @ x + b[1] * x[1]])

    u = np.array(u)
    exact = np.stack([(Q + Q.T) @ u, (Q + Q.T) @ u]) + np.diag(b)
    step = 1e-3
    assert np.allclose(nm.jacobian_fd(f, u, step), exact, atol=10 * step ** 2)


@settings(max_examples=40, deadline=None)
@given(square3)
def test_exact_inverse_round_trip(rows):
    m = ex(rows)
    if nm.determinant(m, nm.EXACT) == 0:
        return
    inv = nm.inverse(m, nm.EXACT)
    assert nm.matrices_equal(m @ inv, nm.identity(3, nm.EXACT), nm.EXACT)
