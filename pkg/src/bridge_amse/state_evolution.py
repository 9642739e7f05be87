"""State-evolution fixed points, losses at the fixed point, and small-noise expansions.

A fixed point (sigma_bar, chi_bar) of the bridge estimator with penalty
lambda * ||beta||_q^q satisfies

    sigma^2 = sigma_w^2 + (1/delta) E[(eta_q(B + sigma Z; theta) - B)^2]
    lambda  = theta (1 - (1/delta) E[eta_q'(B + sigma Z; theta)])

with threshold ``theta = chi * sigma**(2 - q)``. Throughout this module
``chi`` is the normalized threshold, so the first equation reads

    sigma_w^2 / sigma^2 + R_q(chi, sigma) / delta = 1.

The optimally tuned AMSE replaces R_q(chi, sigma) with its minimum over chi.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DomainError, NoSolutionError
from .prior import SignalPrior, expect_bz, moment_absG, moment_absZ
from .prox import check_exponent, prox
from .risk import chi_min, m1_curve, mean_derivative, normalized_risk, optimal_chi

log = logging.getLogger(__name__)

_RTOL = 4.0 * np.finfo(float).eps
_MAX_DOUBLINGS = 200


def _check_inputs(delta: float, sigma_w: float, q: float) -> float:
    if not delta > 0.0:
        raise DomainError(f"delta={delta!r} must be > 0")
    if not sigma_w > 0.0:
        raise DomainError(f"sigma_w={sigma_w!r} must be > 0; probe sigma_w -> 0 with a sequence instead")
    return check_exponent(q)


@dataclass(frozen=True)
class SEFixedPoint:
    """A solved state-evolution point.

    ``chi_bar`` is normalized; the threshold applied to B + sigma_bar Z is
    ``threshold = chi_bar * sigma_bar**(2 - q)``.
    """

    sigma_bar: float
    chi_bar: float
    lam: float
    amse: float
    q: float
    delta: float
    sigma_w: float
    prior: SignalPrior = field(repr=False)
    residual: float = 0.0

    @property
    def threshold(self) -> float:
        return self.chi_bar * self.sigma_bar ** (2.0 - self.q)

    @property
    def lambda_(self) -> float:
        return self.lam


# ---------------------------------------------------------------------------
# shared pieces


def lambda_of_chi(chi: float, sigma_chi: float, delta: float, q: float, prior: SignalPrior) -> float:
    """Penalty level matching normalized threshold ``chi`` at noise level ``sigma_chi``."""
    q = check_exponent(q)
    if chi == 0.0:
        return 0.0
    slope = mean_derivative(chi, sigma_chi, q, prior)
    return chi * sigma_chi ** (2.0 - q) * (1.0 - slope / delta)


def _variance_residual(sigma: float, chi: float, delta: float, sigma_w: float, q: float, prior) -> float:
    """Relative residual of sigma^2 = sigma_w^2 + sigma^2 R_q(chi, sigma) / delta."""
    r = normalized_risk(chi, sigma, q, prior)
    return abs(sigma_w**2 / sigma**2 + r / delta - 1.0)


def _min_risk(sigma: float, q: float, prior: SignalPrior) -> tuple[float, float]:
    try:
        return optimal_chi(sigma, q, prior, sweep=False)
    except BracketError:
        # risk keeps decreasing in chi toward the eta = 0 limit E B^2 / sigma^2
        return math.inf, prior.second_moment / sigma**2


# ---------------------------------------------------------------------------
# optimal tuning


def tuned_gap(sigma: float, delta: float, sigma_w: float, q: float, prior: SignalPrior) -> float:
    """sigma_w^2/sigma^2 + min_chi R_q(chi, sigma)/delta - 1; strictly decreasing in sigma."""
    return sigma_w**2 / sigma**2 + _min_risk(sigma, q, prior)[1] / delta - 1.0


def tuned_bracket(delta: float, sigma_w: float, prior: SignalPrior) -> tuple[float, float]:
    """Interval of sigma containing the tuned fixed point.

    The upper end uses min_chi R <= min(1, E B^2 / sigma^2).
    """
    hi = math.sqrt(sigma_w**2 + prior.second_moment / delta)
    if delta > 1.0:
        hi = min(hi, sigma_w * math.sqrt(delta / (delta - 1.0)))
    return sigma_w, hi


def solve_tuned(delta: float, sigma_w: float, q: float, prior: SignalPrior) -> SEFixedPoint:
    """Fixed point under the penalty level that minimizes the AMSE."""
    q = _check_inputs(delta, sigma_w, q)
    lo, hi = tuned_bracket(delta, sigma_w, prior)
    g = lambda s: tuned_gap(s, delta, sigma_w, q, prior)
    g_hi = g(hi)
    if g_hi >= 0.0:
        # the bound is attained: the upper end is the root
        sigma = hi
    else:
        sigma = brentq(g, lo, hi, xtol=1e-300, rtol=_RTOL, maxiter=500)
    chi, _ = optimal_chi(sigma, q, prior, sweep=True)
    if not math.isfinite(chi):
        raise NoSolutionError("optimal threshold is infinite at the fixed point")
    lam = lambda_of_chi(chi, sigma, delta, q, prior)
    return SEFixedPoint(
        sigma_bar=sigma,
        chi_bar=chi,
        lam=lam,
        amse=delta * (sigma**2 - sigma_w**2),
        q=q,
        delta=delta,
        sigma_w=sigma_w,
        prior=prior,
        residual=_variance_residual(sigma, chi, delta, sigma_w, q, prior),
    )


def count_tuned_roots(delta: float, sigma_w: float, q: float, prior: SignalPrior, points: int = 200) -> int:
    """Number of sign changes of the tuned gap on a grid over the solver bracket."""
    q = _check_inputs(delta, sigma_w, q)
    lo, hi = tuned_bracket(delta, sigma_w, prior)
    grid = np.linspace(lo, hi, points)
    vals = np.array([tuned_gap(s, delta, sigma_w, q, prior) for s in grid])
    signs = np.sign(vals)
    signs = signs[signs != 0]
    n = int(np.count_nonzero(np.diff(signs)))
    if n > 1:
        log.warning("tuned gap has %d sign changes on [%g, %g]", n, lo, hi)
    return n


# ---------------------------------------------------------------------------
# fixed penalty


def sigma_of_chi(chi: float, delta: float, sigma_w: float, q: float, prior: SignalPrior) -> float:
    """Unique sigma with sigma_w^2/sigma^2 + R_q(chi, sigma)/delta = 1, for chi > chi_min."""
    q = _check_inputs(delta, sigma_w, q)
    h = lambda s: sigma_w**2 / s**2 + normalized_risk(chi, s, q, prior) / delta - 1.0
    lo = sigma_w
    if h(lo) <= 0.0:
        # only possible when R vanishes, which needs chi -> infinity
        raise NoSolutionError(f"no sigma solves the variance equation at chi={chi!r}")
    hi = 2.0 * sigma_w
    for _ in range(_MAX_DOUBLINGS):
        if h(hi) < 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(f"could not bracket sigma at chi={chi!r}; is chi above chi_min?")
    return brentq(h, lo, hi, xtol=1e-300, rtol=_RTOL, maxiter=500)


def lambda_curve(chi: float, delta: float, sigma_w: float, q: float, prior: SignalPrior) -> float:
    """lambda(chi) along the curve of variance fixed points."""
    return lambda_of_chi(chi, sigma_of_chi(chi, delta, sigma_w, q, prior), delta, q, prior)


def solve_fixed_lambda(lam: float, delta: float, sigma_w: float, q: float, prior: SignalPrior) -> SEFixedPoint:
    """Fixed point for a given penalty level ``lam``."""
    q = _check_inputs(delta, sigma_w, q)
    if not lam > 0.0:
        raise DomainError(f"lambda={lam!r} must be > 0")
    cmin = chi_min(delta, q)
    f = lambda c: lambda_curve(c, delta, sigma_w, q, prior) - lam

    hi = max(1.0, 2.0 * cmin)
    for _ in range(_MAX_DOUBLINGS):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise NoSolutionError(f"lambda={lam!r} above the reachable range", residual=f(hi))

    step = hi - cmin
    lo = cmin + 0.5 * step
    for _ in range(_MAX_DOUBLINGS):
        if f(lo) < 0.0:
            break
        step *= 0.5
        lo = cmin + step
        if step <= 1e-15 * max(1.0, cmin):
            raise NoSolutionError(f"lambda={lam!r} below the reachable range", residual=f(lo))
    else:
        raise NoSolutionError(f"lambda={lam!r} below the reachable range")

    chi = brentq(f, lo, hi, xtol=1e-300, rtol=_RTOL, maxiter=500)
    sigma = sigma_of_chi(chi, delta, sigma_w, q, prior)
    return SEFixedPoint(
        sigma_bar=sigma,
        chi_bar=chi,
        lam=lambda_of_chi(chi, sigma, delta, q, prior),
        amse=delta * (sigma**2 - sigma_w**2),
        q=q,
        delta=delta,
        sigma_w=sigma_w,
        prior=prior,
        residual=_variance_residual(sigma, chi, delta, sigma_w, q, prior),
    )


# ---------------------------------------------------------------------------
# losses


def loss_at_fixed_point(fp: SEFixedPoint, psi: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    """E[psi(eta_q(B + sigma_bar Z; threshold), B)] at the fixed point.

    ``psi`` must broadcast over arrays; it may be non-smooth where the
    estimate crosses 0 or, for q = 1, where it leaves the dead zone.
    """
    s, theta, q = fp.sigma_bar, fp.threshold, fp.q
    if q == 1.0:
        kinks = lambda b: (-b / s, (theta - b) / s, (-theta - b) / s)
    else:
        kinks = lambda b: (-b / s,)
    return expect_bz(lambda b, z: psi(prox(b + s * z, theta, q), b), fp.prior, kinks=kinks)


# ---------------------------------------------------------------------------
# small-noise expansions


class Regime(enum.Enum):
    Q_IN_1_2 = "q_in_1_2"
    Q_EQ_2 = "q_eq_2"
    LASSO_BOUNDED_AWAY = "lasso_bounded_away"
    LASSO_MASS_AT_ZERO = "lasso_mass_at_zero"
    FAILURE = "failure"


@dataclass(frozen=True)
class ExpansionResult:
    """Leading terms of the AMSE as sigma_w -> 0.

    ``first_order`` is evaluated at the given ``sigma_w``; the correction is
    ``second_order_coeff * sigma_w**second_order_power``. A NaN coefficient
    means only the order is known.
    """

    first_order: float
    second_order_coeff: float
    second_order_power: float
    regime: Regime
    sigma_w: float
    note: str = ""

    @property
    def second_order(self) -> float:
        """first_order plus the correction (NaN when the coefficient is unknown)."""
        return self.first_order + self.second_order_coeff * self.sigma_w**self.second_order_power


def expansion(delta: float, q: float, prior: SignalPrior, sigma_w: float) -> ExpansionResult:
    """Small-noise expansion of the optimally tuned AMSE."""
    q = check_exponent(q)
    if not delta > 0.0:
        raise DomainError(f"delta={delta!r} must be > 0")
    if not sigma_w >= 0.0:
        raise DomainError(f"sigma_w={sigma_w!r} must be >= 0")
    eps = prior.epsilon
    nan = math.nan
    s2 = sigma_w**2

    if q > 1.0:
        if delta <= 1.0:
            return ExpansionResult(nan, nan, nan, Regime.FAILURE, sigma_w, "delta <= 1: AMSE stays bounded away from 0")
        first = s2 / (1.0 - 1.0 / delta)
        if q == 2.0:
            coeff = -(delta**3) / ((delta - 1.0) ** 3 * eps * moment_absG(prior, 2.0))
            return ExpansionResult(first, coeff, 4.0, Regime.Q_EQ_2, sigma_w)
        coeff = -(
            delta ** (q + 1.0) * (1.0 - eps) ** 2 * moment_absZ(q) ** 2
            / ((delta - 1.0) ** (q + 1.0) * eps * moment_absG(prior, 2.0 * q - 2.0))
        )
        return ExpansionResult(first, coeff, 2.0 * q, Regime.Q_IN_1_2, sigma_w)

    m1 = m1_curve(eps).m_value
    if delta <= m1:
        return ExpansionResult(nan, nan, nan, Regime.FAILURE, sigma_w,
                               f"delta <= M_1(eps) = {m1:.6g}: AMSE stays bounded away from 0")
    first = delta * m1 * s2 / (delta - m1)
    if prior.min_abs_atom > 0.0:
        return ExpansionResult(first, 0.0, 2.0, Regime.LASSO_BOUNDED_AWAY, sigma_w,
                               "second term exponentially small in 1/sigma_w")
    ell = prior.magnitude.ell
    return ExpansionResult(first, nan, ell + 2.0, Regime.LASSO_MASS_AT_ZERO, sigma_w,
                           "gap to first order is of order sigma_w^(ell+2) up to log factors")


# ---------------------------------------------------------------------------
# theoretical AMP recursion


@dataclass(frozen=True)
class SETrace:
    """tau_t for t = 0..T and the predicted ||beta^(t+1) - beta||^2/p for t = 0..T-1."""

    tau: np.ndarray
    mse: np.ndarray


def amp_recursion(chi: float, delta: float, sigma_w: float, q: float, prior: SignalPrior, steps: int) -> SETrace:
    """tau_0^2 = sigma_w^2 + E B^2/delta; tau_{t+1}^2 = sigma_w^2 + E[(eta_q(B + tau_t Z; theta_t) - B)^2]/delta."""
    q = check_exponent(q)
    if steps < 0:
        raise DomainError("steps must be >= 0")
    tau = [math.sqrt(sigma_w**2 + prior.second_moment / delta)]
    mse = []
    for _ in range(steps):
        t = tau[-1]
        m = t * t * normalized_risk(chi, t, q, prior)
        mse.append(m)
        tau.append(math.sqrt(sigma_w**2 + m / delta))
    return SETrace(np.array(tau), np.array(mse))
