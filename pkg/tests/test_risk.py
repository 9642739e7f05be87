import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import ndtr

from bridge_amse.errors import BracketError, ConvergenceError, DomainError
from bridge_amse.prior import SignalPrior, sample_signal
from bridge_amse.prox import prox, prox_d1
from bridge_amse.risk import (
    RiskQuery,
    chi_min,
    m1_curve,
    mean_derivative,
    minimize_quasiconvex,
    mq_curve,
    normalized_risk,
    null_second_moment,
    optimal_chi,
    risk_R,
)

TWO_POINT = SignalPrior.two_point(0.4)
PHI = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def quad_risk(chi, sigma, q, prior, f=None):
    """Adaptive-quadrature oracle for E f(B/sigma + Z, B/sigma) over the prior atoms."""
    f = f or (lambda u, m: (float(prox(u, chi, q)) - m) ** 2)
    vals, wts = prior.support()
    total = 0.0
    for b, w in zip(vals, wts):
        m = b / sigma
        pts = sorted({-m, chi - m, -chi - m})
        g = lambda z: f(m + z, m) * PHI(z)
        total += w * quad(g, -40, 40, points=pts, limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    return total


def ridge_risk(chi, sigma, second_moment):
    return (second_moment / sigma**2) * (2 * chi / (1 + 2 * chi)) ** 2 + 1 / (1 + 2 * chi) ** 2


def test_zero_threshold_is_identity():
    for q in (1.0, 1.5, 2.0):
        assert risk_R(RiskQuery(0.0, 0.3, q, TWO_POINT)) == 1.0


def test_ridge_closed_form_on_grid():
    chis = np.geomspace(1e-3, 50, 10)
    sigmas = np.geomspace(0.01, 10, 10)
    for c in chis:
        for s in sigmas:
            assert normalized_risk(c, s, 2.0, TWO_POINT) == pytest.approx(ridge_risk(c, s, 0.4), abs=1e-10)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_large_threshold_limit(q):
    assert normalized_risk(1e7, 1.0, q, TWO_POINT) == pytest.approx(0.4, abs=1e-3)


@pytest.mark.parametrize("q", [1.0, 1.2, 1.5, 1.8])
@pytest.mark.parametrize("chi,sigma", [(0.5, 1.0), (1.3, 0.2), (0.05, 3.0), (2.5, 0.05)])
def test_risk_matches_adaptive_quadrature(q, chi, sigma):
    assert normalized_risk(chi, sigma, q, TWO_POINT) == pytest.approx(quad_risk(chi, sigma, q, TWO_POINT), abs=1e-10)
    slope = quad_risk(chi, sigma, q, TWO_POINT, f=lambda u, m: float(prox_d1(u, chi, q)))
    assert mean_derivative(chi, sigma, q, TWO_POINT) == pytest.approx(slope, abs=1e-9)


def test_risk_matches_monte_carlo():
    rng = np.random.default_rng(5)
    n = 1_000_000
    b = sample_signal(TWO_POINT, n, seed=5)
    z = rng.standard_normal(n)
    for q, chi, sigma in [(1.0, 1.1, 0.4), (1.5, 0.7, 0.4), (2.0, 0.3, 0.4)]:
        s = (prox(b / sigma + z, chi, q) - b / sigma) ** 2
        se = s.std() / math.sqrt(n)
        assert abs(s.mean() - normalized_risk(chi, sigma, q, TWO_POINT)) < 3 * se


@settings(max_examples=40, deadline=None)
@given(
    chi=st.floats(0.01, 5), s1=st.floats(0.02, 5), ratio=st.floats(1.01, 5),
    q=st.sampled_from([1.0, 1.3, 1.5, 1.8, 2.0]), eps=st.floats(0.05, 0.95),
)
def test_risk_decreases_in_sigma(chi, s1, ratio, q, eps):
    prior = SignalPrior.two_point(eps)
    small, large = s1, s1 * ratio
    assert normalized_risk(chi, large, q, prior) <= normalized_risk(chi, small, q, prior) + 1e-12


@pytest.mark.parametrize("sigma", [0.1, 0.5, 2.0])
def test_optimal_chi_ridge(sigma):
    a = 0.4 / (0.4 + sigma**2)
    chi, r = optimal_chi(sigma, 2.0, TWO_POINT)
    assert chi == pytest.approx((1 - a) / (2 * a), rel=1e-7)
    # unnormalized minimum E B^2 sigma^2 / (E B^2 + sigma^2)
    assert r == pytest.approx(0.4 / (0.4 + sigma**2), rel=1e-12)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
@pytest.mark.parametrize("sigma", [0.05, 0.3, 1.5])
def test_optimal_chi_is_stationary(q, sigma):
    chi, r = optimal_chi(sigma, q, TWO_POINT)
    assert r <= 1.0
    h = 1e-4 * max(1.0, chi)
    left = normalized_risk(chi - h, sigma, q, TWO_POINT) - r
    right = normalized_risk(chi + h, sigma, q, TWO_POINT) - r
    assert left >= -1e-12 and right >= -1e-12


def test_optimal_chi_tends_to_phase_minimizer():
    target = m1_curve(0.25).chi_star_star
    chi, _ = optimal_chi(1e-3, 1.0, SignalPrior.two_point(0.25))
    assert chi == pytest.approx(target, rel=1e-6)


def m1_grid_oracle(eps, step=1e-6, top=4.0):
    chi = np.arange(0.0, top, step)
    null = 2 * ((1 + chi**2) * ndtr(-chi) - chi * np.exp(-0.5 * chi**2) / math.sqrt(2 * math.pi))
    f = (1 - eps) * null + eps * (1 + chi**2)
    i = int(np.argmin(f))
    return f[i], chi[i]


@pytest.mark.parametrize("eps", [0.05, 0.25, 0.6, 0.9])
def test_m1_matches_grid_oracle(eps):
    m, c = m1_grid_oracle(eps)
    pt = m1_curve(eps)
    assert pt.m_value == pytest.approx(m, abs=1e-10)
    assert pt.chi_star_star == pytest.approx(c, abs=2e-6)


def test_m1_curve_shape():
    eps = np.arange(0.05, 0.951, 0.05)
    m = np.array([m1_curve(e).m_value for e in eps])
    assert np.all(np.diff(m) > 0)
    assert np.all(m > eps) and np.all(m < 1)
    assert m1_curve(0.01).m_value < 0.1
    assert 0.9 < m1_curve(0.99).m_value < 1.0
    with pytest.raises(DomainError):
        m1_curve(1.0)


def test_mq_curve():
    assert mq_curve(0.3, 1.5).m_value == 1.0
    assert mq_curve(0.9, 2.0).m_value == 1.0
    assert mq_curve(0.3, 1.0) == m1_curve(0.3)


def test_chi_min():
    assert chi_min(1.5, 1.0) == 0.0
    assert chi_min(1.5, 1.7) == 0.0
    # bisection oracle on the closed form
    g = lambda c: 2 * ((1 + c * c) * ndtr(-c) - c * PHI(c)) - 0.5
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if g(mid) > 0 else (lo, mid)
    assert chi_min(0.5, 1.0) == pytest.approx(lo, abs=1e-12)
    assert chi_min(0.5, 2.0) == pytest.approx(0.5 * (math.sqrt(2) - 1), rel=1e-15)
    assert null_second_moment(chi_min(0.6, 1.5), 1.5) == pytest.approx(0.6, abs=1e-12)
    assert chi_min(1 - 1e-6, 1.0) < 1e-3


def test_minimizer_ties_go_left_and_diagnostics():
    flat = lambda x: max(abs(x - 3.0) - 1.0, 0.0)
    x, f = minimize_quasiconvex(flat, sweep=False)
    assert f == 0.0 and x == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(BracketError):
        minimize_quasiconvex(lambda x: -x)
    # a narrow second well inside the sweep window
    bumpy = lambda x: (x - 1.0) ** 2 - 0.5 * math.exp(-((x - 1.07) / 1e-3) ** 2)
    with pytest.raises(ConvergenceError):
        minimize_quasiconvex(bumpy)


def test_query_validation():
    with pytest.raises(DomainError):
        RiskQuery(1.0, 0.0, 1.5, TWO_POINT)
    with pytest.raises(DomainError):
        RiskQuery(-1.0, 1.0, 1.5, TWO_POINT)
