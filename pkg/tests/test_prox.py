import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bridge_amse.errors import DomainError, UnsupportedOperation
from bridge_amse.prox import check_exponent, prox, prox_d1, prox_d2, prox_eval, prox_residual, prox_vector


def bisect_root(a, c, q, tol=1e-14):
    """Plain bisection for v + c v^(q-1) = a on [0, a]."""
    lo, hi = 0.0, a
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid + c * mid ** (q - 1.0) > a:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


reals = st.floats(-50, 50, allow_nan=False)
chis = st.floats(1e-3, 20)
qs = st.floats(1.0, 2.0)
interior_q = st.floats(1.05, 1.95)


def test_closed_form_examples():
    assert prox_eval(5.0, 1.0, 2.0) == pytest.approx(5.0 / 3.0, abs=1e-15)
    assert prox_eval(3.0, 1.0, 1.0) == 2.0
    assert prox_eval(-0.7, 0.0, 1.5) == -0.7


def test_interior_root_matches_bisection():
    # v + 1.5 sqrt(v) = 2
    oracle = bisect_root(2.0, 1.5, 1.5)
    assert prox_eval(2.0, 1.0, 1.5) == pytest.approx(oracle, abs=1e-12)
    # the same root in closed form: sqrt(v) = (-1.5 + sqrt(2.25 + 8)) / 2
    assert oracle == pytest.approx(((-1.5 + math.sqrt(10.25)) / 2) ** 2, abs=1e-12)


@pytest.mark.parametrize("q", [1.01, 1.2, 1.5, 1.8, 1.99])
@pytest.mark.parametrize("u,chi", [(0.3, 0.1), (2.0, 1.0), (40.0, 3.0), (1e-3, 5.0), (7.0, 0.01)])
def test_interior_grid_against_bisection(q, u, chi):
    oracle = bisect_root(u, chi * q, q)
    assert prox_eval(u, chi, q) == pytest.approx(oracle, abs=1e-12 * max(1.0, u))


def test_residual_tolerance():
    rng = np.random.default_rng(0)
    u = rng.uniform(-30, 30, 5000)
    for q in (1.1, 1.5, 1.9):
        v = np.abs(prox(u, 0.7, q))
        resid = np.abs(v + 0.7 * q * v ** (q - 1) - np.abs(u))
        assert np.all(resid <= 1e-12 * np.maximum(1.0, np.abs(u)))


def test_near_endpoint_q_snaps_to_closed_form():
    assert check_exponent(1.0 + 1e-10) == 1.0
    assert check_exponent(2.0 - 1e-10) == 2.0
    assert prox_eval(3.0, 1.0, 1.0 + 1e-10) == 2.0


def test_tiny_q_above_one_underflows_to_zero_inside_threshold():
    # the exact root is astronomically small; it is reported as 0
    assert prox_eval(0.5, 1.0, 1.0 + 1e-4) == 0.0
    assert prox_eval(3.0, 1.0, 1.0 + 1e-4) == pytest.approx(2.0, abs=1e-3)


@pytest.mark.parametrize("q", [0.5, 2.5, float("nan")])
def test_bad_exponent(q):
    with pytest.raises(DomainError):
        prox_eval(1.0, 1.0, q)


def test_negative_chi():
    with pytest.raises(DomainError):
        prox_eval(1.0, -0.1, 1.5)


def test_d1_examples():
    assert prox_d1(0.0, 1.0, 1.5) == 0.0
    assert prox_d1(5.0, 1.0, 2.0) == pytest.approx(1.0 / 3.0)
    assert prox_d1(0.5, 1.0, 1.0) == 0.0
    assert prox_d1(1.5, 1.0, 1.0) == 1.0
    h = 1e-6
    fd = (prox_eval(2.0 + h, 1.0, 1.5) - prox_eval(2.0 - h, 1.0, 1.5)) / (2 * h)
    assert prox_d1(2.0, 1.0, 1.5) == pytest.approx(fd, abs=1e-6)


def test_d2_examples():
    assert prox_d2(0.0, 1.0, 1.5) == 0.0
    assert prox_d2(5.0, 1.0, 2.0) == pytest.approx(-10.0 / 9.0)
    h = 1e-6
    fd = (prox_eval(2.0, 1.0 + h, 1.5) - prox_eval(2.0, 1.0 - h, 1.5)) / (2 * h)
    assert prox_d2(2.0, 1.0, 1.5) == pytest.approx(fd, abs=1e-6)


def test_d2_unsupported_for_soft_threshold():
    with pytest.raises(UnsupportedOperation):
        prox_d2(1.0, 1.0, 1.0)


def test_vector_examples():
    np.testing.assert_array_equal(prox_vector([3.0, -3.0, 0.0], 1.0, 1.0), [2.0, -2.0, 0.0])
    np.testing.assert_allclose(prox_vector([5.0, 10.0], 1.0, 2.0), [5 / 3, 10 / 3], rtol=1e-15)
    with pytest.raises(DomainError):
        prox_vector(np.zeros((2, 2)), 1.0, 1.5)


@pytest.mark.parametrize("q", [1.0, 1.37, 2.0])
def test_vector_matches_scalar_loop_bitwise(q):
    u = np.random.default_rng(1).normal(scale=3.0, size=1000)
    loop = np.array([prox_eval(x, 0.8, q) for x in u])
    np.testing.assert_array_equal(prox_vector(u, 0.8, q), loop)


@settings(max_examples=300, deadline=None)
@given(u=reals, chi=chis, q=interior_q)
def test_fixed_point_identity(u, chi, q):
    v = prox_eval(u, chi, q)
    rhs = chi * q * math.copysign(abs(v) ** (q - 1), u)
    assert u - v == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(u)))


@settings(max_examples=300, deadline=None)
@given(u=reals, w=reals, chi=chis, q=qs)
def test_contraction_and_odd_symmetry(u, w, chi, q):
    a, b = prox_eval(u, chi, q), prox_eval(w, chi, q)
    assert abs(a) <= abs(u)
    assert abs(a - b) <= abs(u - w) * (1 + 1e-12) + 1e-15
    assert prox_eval(-u, chi, q) == -a


@settings(max_examples=300, deadline=None)
@given(u=reals, chi=chis, q=qs, alpha=st.floats(0.05, 20))
def test_scaling_identity(u, chi, q, alpha):
    lhs = prox_eval(alpha * u, alpha ** (2 - q) * chi, q)
    assert lhs == pytest.approx(alpha * prox_eval(u, chi, q), abs=1e-10 * max(1.0, abs(alpha * u)))


@settings(max_examples=200, deadline=None)
@given(chi=chis, q=interior_q)
def test_d1_bounded_and_increasing_on_positive_axis(chi, q):
    u = np.linspace(1e-3, 30, 400)
    d = prox_d1(u, chi, q)
    assert np.all((d >= 0) & (d <= 1))
    assert np.all(np.diff(d) > 0)


@settings(max_examples=200, deadline=None)
@given(u=st.floats(-20, 20).filter(lambda x: abs(x) > 1e-2), chi=st.floats(0.05, 5), q=st.floats(1.1, 2.0))
def test_derivatives_match_finite_differences(u, chi, q):
    h = 1e-6
    fd1 = (prox_eval(u + h, chi, q) - prox_eval(u - h, chi, q)) / (2 * h)
    fd2 = (prox_eval(u, chi + h, q) - prox_eval(u, chi - h, q)) / (2 * h)
    assert prox_d1(u, chi, q) == pytest.approx(fd1, abs=1e-6)
    assert prox_d2(u, chi, q) == pytest.approx(fd2, abs=1e-6)
    assert prox_d2(u, chi, q) * u <= 0


def test_residual_has_no_cancellation():
    u = np.array([1e8, -1e8])
    r = prox_residual(u, 1e-3, 1.5)
    v = np.abs(prox(u, 1e-3, 1.5))
    np.testing.assert_allclose(r, np.sign(u) * 1.5e-3 * np.sqrt(v), rtol=1e-14)
    np.testing.assert_array_equal(prox_residual([0.5, -3.0], 1.0, 1.0), [0.5, -1.0])
