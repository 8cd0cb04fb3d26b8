import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirtrace.fields import ScalarField, check_gradient, constant, from_expression, polynomial, random_polynomial

points = st.lists(st.tuples(st.floats(0.1, 0.9), st.floats(0.1, 0.9)), min_size=1, max_size=20)


def test_expression_value_and_gradient():
    f = from_expression("x1^2*x2 + sin(pi*x2)")
    X = np.array([[0.5, 0.25], [1.0, 1.0]])
    assert f(X) == pytest.approx([0.0625 + np.sin(np.pi / 4), 1.0])
    g = f.gradient(X)
    assert g[0] == pytest.approx([0.25, 0.25 + np.pi * np.cos(np.pi / 4)])


def test_expression_aliases_and_constants():
    assert from_expression("x*y")(np.array([[2.0, 3.0]]))[0] == 6.0
    c = from_expression("3")
    X = np.zeros((4, 2))
    assert np.all(c(X) == 3.0)
    assert np.all(c.gradient(X) == 0.0)


def test_one_dimensional_expression():
    f = from_expression("x1^3", dim=1)
    assert f(np.array([[2.0]]))[0] == 8.0
    assert f.directional(np.array([[2.0]]), [-1.0])[0] == -12.0


@pytest.mark.parametrize("bad", ["x3 + 1", "x1 +* 2", "foo(x1)"])
def test_expression_errors(bad):
    with pytest.raises(ValueError):
        from_expression(bad)


def test_polynomial_matches_its_coefficients():
    C = np.zeros((3, 3))
    C[2, 0], C[1, 1], C[0, 0] = 1.0, -2.0, 0.5
    p = polynomial(C)
    X = np.array([[0.3, 0.7]])
    assert p(X)[0] == pytest.approx(0.09 - 0.42 + 0.5)
    assert p.gradient(X)[0] == pytest.approx([0.6 - 1.4, -0.6])


@given(seed=st.integers(0, 2**32 - 1), pts=points, angle=st.floats(0, 2 * np.pi))
def test_random_polynomial_gradient_matches_differences(seed, pts, angle):
    f = random_polynomial(np.random.default_rng(seed))
    v = np.array([np.cos(angle), np.sin(angle)])
    assert check_gradient(f, np.array(pts), v) < 1e-6


@given(pts=points)
def test_expression_gradient_matches_differences(pts):
    f = from_expression("exp(x1)*cos(3*x2) + sqrt(1 + x1^2)")
    assert check_gradient(f, np.array(pts), [0.6, 0.8]) < 1e-6


def test_constant_field():
    c = constant(2.5)
    X = np.random.default_rng(0).random((5, 2))
    assert np.all(c(X) == 2.5)
    assert np.all(c.directional(X, [1.0, 0.0]) == 0.0)


def test_gradient_check_respects_components():
    # a jump across x1 = 0.5 is invisible to the check
    step = ScalarField(lambda X: (X[:, 0] > 0.5).astype(float), lambda X: np.zeros_like(X),
                       component=lambda X: (X[:, 0] > 0.5).astype(int))
    X = np.array([[0.5, 0.5], [0.2, 0.2]])
    assert check_gradient(step, X, [1.0, 0.0]) == 0.0
