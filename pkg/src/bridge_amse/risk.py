"""Normalized risk of the proximal map under a sparse prior, and phase curves.

    R_q(chi, sigma) = E[(eta_q(B/sigma + Z; chi) - B/sigma)^2]

It relates to the unnormalized risk by the scaling identity

    E[(eta_q(B + sigma Z; chi sigma^(2-q)) - B)^2] = sigma^2 R_q(chi, sigma).

For q = 1 all Gaussian integrals are evaluated in closed form. For 1 < q <= 2
the Z integral is a composite Gauss-Legendre rule split where the integrand is
not smooth (u = 0, i.e. z = -b/sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import BracketError, ConvergenceError, DomainError
from .prior import QuadratureRule, SignalPrior, expect_bz, expect_z, gauss_hermite
from .prox import check_exponent, prox, prox_d1, prox_residual

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

#: Golden-section stops when the bracket is narrower than this times max(1, chi).
CHI_WIDTH_TOL = 1e-10
#: Bracket growth gives up beyond this threshold.
CHI_MAX = 1e12
SWEEP_POINTS = 50
SWEEP_HALF_WIDTH = 0.1
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _phi(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _tail(x):
    """Upper normal tail P(Z > x)."""
    return ndtr(-np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# soft-threshold closed forms


def soft_mse(mu, chi: float) -> np.ndarray:
    """E[(eta_1(mu + Z; chi) - mu)^2], elementwise in mu."""
    mu = np.asarray(mu, dtype=float)
    a = chi - mu
    b = chi + mu
    c = 1.0 + chi * chi
    return (
        c * _tail(a)
        - (chi + mu) * _phi(a)
        + c * _tail(b)
        - (chi - mu) * _phi(b)
        + mu * mu * (ndtr(a) - ndtr(-b))
    )


def soft_active(mu, chi: float) -> np.ndarray:
    """E[eta_1'(mu + Z; chi)] = P(|mu + Z| > chi), elementwise in mu."""
    mu = np.asarray(mu, dtype=float)
    return _tail(chi - mu) + _tail(chi + mu)


def soft_second_moment_null(chi: float) -> float:
    """E[eta_1(Z; chi)^2] = 2[(1 + chi^2) P(Z > chi) - chi phi(chi)]."""
    return float(2.0 * ((1.0 + chi * chi) * _tail(chi) - chi * _phi(chi)))


# ---------------------------------------------------------------------------
# risk


@dataclass(frozen=True)
class RiskQuery:
    """Arguments of R_q(chi, sigma)."""

    chi: float
    sigma: float
    q: float
    prior: SignalPrior

    def __post_init__(self):
        if not self.chi >= 0.0:
            raise DomainError(f"chi={self.chi!r} must be >= 0")
        if not self.sigma > 0.0:
            raise DomainError(f"sigma={self.sigma!r} must be > 0")
        object.__setattr__(self, "q", check_exponent(self.q))


def _kinks(sigma: float, q: float, chi: float) -> Callable[[float], tuple]:
    if q == 1.0:
        return lambda b: (chi - b / sigma, -chi - b / sigma)
    return lambda b: (-b / sigma,)


def _gauss_expect(f, prior, sigma, q, chi, rule: Optional[QuadratureRule]):
    if q == 2.0:
        # polynomial in z: Gauss-Hermite is exact
        return expect_bz(f, prior, rule=rule or gauss_hermite())
    return expect_bz(f, prior, kinks=_kinks(sigma, q, chi))


def normalized_risk(chi: float, sigma: float, q: float, prior: SignalPrior,
                    rule: Optional[QuadratureRule] = None) -> float:
    """R_q(chi, sigma); ``rule`` overrides the Gauss-Hermite rule used at q = 2."""
    query = RiskQuery(chi, sigma, q, prior)
    chi, sigma, q = query.chi, query.sigma, query.q
    if chi == 0.0:
        return 1.0
    if q == 1.0:
        vals, wts = prior.support()
        return float(np.dot(wts, soft_mse(vals / sigma, chi)))

    def integrand(b, z):
        u = b / sigma + z
        # eta(u) - b/sigma = z - (u - eta(u))
        return np.square(z - prox_residual(u, chi, q))

    return _gauss_expect(integrand, prior, sigma, q, chi, rule)


def risk_R(query: RiskQuery, rule: Optional[QuadratureRule] = None) -> float:
    """R_q(chi, sigma) for a :class:`RiskQuery`."""
    return normalized_risk(query.chi, query.sigma, query.q, query.prior, rule)


def mean_derivative(chi: float, sigma: float, q: float, prior: SignalPrior,
                    rule: Optional[QuadratureRule] = None) -> float:
    """E[eta_q'(B/sigma + Z; chi)], the average slope of the proximal map."""
    query = RiskQuery(chi, sigma, q, prior)
    chi, sigma, q = query.chi, query.sigma, query.q
    if chi == 0.0:
        return 1.0
    if q == 1.0:
        vals, wts = prior.support()
        return float(np.dot(wts, soft_active(vals / sigma, chi)))
    if q == 2.0:
        return 1.0 / (1.0 + 2.0 * chi)
    return _gauss_expect(lambda b, z: prox_d1(b / sigma + z, chi, q), prior, sigma, q, chi, rule)


def null_second_moment(chi: float, q: float) -> float:
    """E[eta_q(Z; chi)^2] for Z ~ N(0, 1)."""
    q = check_exponent(q)
    if chi < 0:
        raise DomainError("chi must be >= 0")
    if q == 1.0:
        return soft_second_moment_null(chi)
    if q == 2.0:
        return 1.0 / (1.0 + 2.0 * chi) ** 2
    return expect_z(lambda z: np.square(prox(z, chi, q)), (0.0,))


# ---------------------------------------------------------------------------
# minimization over chi


def _golden(f: Callable[[float], float], lo: float, hi: float, rel_tol: float):
    """Golden-section search for a minimizer of a quasi-convex f on [lo, hi].

    Ties are broken toward the left end.
    """
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > rel_tol * max(1.0, abs(x1)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def minimize_quasiconvex(f: Callable[[float], float], start: float = 1.0,
                         rel_tol: float = CHI_WIDTH_TOL, sweep: bool = True):
    """Minimize f over [0, inf) for a quasi-convex f.

    The bracket [0, hi] is doubled until f(hi) exceeds the best value seen so
    far. A local sweep of +-10% around the result then checks that no lower
    value was missed.

    Returns ``(x_star, f_star)``.
    """
    f0 = f(0.0)
    best_f = f0
    lo, best_x = 0.0, 0.0
    hi = float(start)
    while True:
        fh = f(hi)
        if fh > best_f:
            break
        lo, best_x, best_f = best_x, hi, fh
        hi = 2.0 * hi
        if hi > CHI_MAX:
            raise BracketError(
                f"objective still non-increasing at chi={hi:.3g}; the minimizer may lie at infinity",
                residual=fh,
            )
    x_star, f_star = _golden(f, lo, hi, rel_tol)
    if f0 <= f_star:
        x_star, f_star = 0.0, f0
    if sweep and x_star > 0.0:
        grid = x_star * np.linspace(1.0 - SWEEP_HALF_WIDTH, 1.0 + SWEEP_HALF_WIDTH, SWEEP_POINTS)
        vals = np.array([f(x) for x in grid])
        slack = 1e-12 * max(1.0, abs(f_star))
        if np.any(vals < f_star - slack):
            i = int(np.argmin(vals))
            raise ConvergenceError(
                f"sweep found f({grid[i]!r})={vals[i]!r} below the golden-section minimum "
                f"f({x_star!r})={f_star!r}; objective is not quasi-convex here",
                residual=f_star - vals[i],
            )
    return x_star, f_star


def optimal_chi(sigma: float, q: float, prior: SignalPrior, sweep: bool = True,
                rule: Optional[QuadratureRule] = None) -> tuple[float, float]:
    """chi*(sigma) = argmin_chi R_q(chi, sigma) and the minimum risk."""
    if not sigma > 0.0:
        raise DomainError(f"sigma={sigma!r} must be > 0")
    q = check_exponent(q)
    return minimize_quasiconvex(lambda c: normalized_risk(c, sigma, q, prior, rule), sweep=sweep)


# ---------------------------------------------------------------------------
# phase transition


@dataclass(frozen=True)
class PhasePoint:
    """Phase-transition value M_q(epsilon) and, for q = 1, its minimizer.

    ``chi_star_star`` is 0 for q > 1, where no minimization is involved.
    """

    epsilon: float
    m_value: float
    chi_star_star: float


def _m1_objective(chi, eps):
    return (1.0 - eps) * soft_second_moment_null(chi) + eps * (1.0 + chi * chi)


def m1_curve(epsilon: float) -> PhasePoint:
    """M_1(eps) = min_chi (1 - eps) E eta_1(Z; chi)^2 + eps (1 + chi^2).

    The objective is strictly convex with an increasing concave derivative,
    so Newton's method from chi = 0 increases monotonically to the minimizer.
    """
    eps = float(epsilon)
    if not (0.0 < eps < 1.0):
        raise DomainError(f"epsilon={epsilon!r} must lie in (0, 1)")
    chi = 0.0
    for _ in range(200):
        d1 = 4.0 * (1.0 - eps) * (chi * _tail(chi) - _phi(chi)) + 2.0 * eps * chi
        d2 = 4.0 * (1.0 - eps) * _tail(chi) + 2.0 * eps
        step = float(d1 / d2)
        chi -= step
        if abs(step) <= 1e-15 * max(1.0, chi):
            break
    else:
        raise ConvergenceError(f"Newton for M_1({eps}) did not converge", residual=step)
    return PhasePoint(eps, float(_m1_objective(chi, eps)), float(chi))


def mq_curve(epsilon: float, q: float) -> PhasePoint:
    """M_q(eps): 1 for 1 < q <= 2, M_1(eps) for q = 1."""
    q = check_exponent(q)
    if q == 1.0:
        return m1_curve(epsilon)
    eps = float(epsilon)
    if not (0.0 < eps < 1.0):
        raise DomainError(f"epsilon={epsilon!r} must lie in (0, 1)")
    return PhasePoint(eps, 1.0, 0.0)


def chi_min(delta: float, q: float) -> float:
    """Smallest chi with E[eta_q(Z; chi)^2] <= delta (0 when delta >= 1)."""
    q = check_exponent(q)
    if not delta > 0.0:
        raise DomainError(f"delta={delta!r} must be > 0")
    if delta >= 1.0:
        return 0.0
    if q == 2.0:
        return 0.5 * (1.0 / math.sqrt(delta) - 1.0)
    g = lambda c: null_second_moment(c, q) - delta
    hi = 1.0
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > CHI_MAX:
            raise BracketError("could not bracket chi_min")
    return brentq(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
