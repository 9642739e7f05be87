"""Finite-dimensional bridge regression: instances, a direct solver, and AMP.

The estimator is

    beta_hat(lambda, q) = argmin_beta 0.5 ||y - X beta||^2 + lambda ||beta||_q^q

with X having i.i.d. N(0, 1/n) entries and n = round(delta * p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import svds

from .errors import ConvergenceError, DivergenceError, DomainError
from .prior import SignalPrior, sample_signal
from .prox import check_exponent, prox, prox_d1
from .risk import chi_min
from .rng import DESIGN, NOISE, SIGNAL, make_rng

MAX_ITER = 100_000
DIVERGENCE_TAU = 1e6


@dataclass(frozen=True)
class Instance:
    """One regression problem y = X beta + w."""

    x_matrix: np.ndarray = field(repr=False)
    beta_true: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    delta: float
    seed: int
    sigma_w: float = 0.0

    @property
    def n(self) -> int:
        return self.x_matrix.shape[0]

    @property
    def p(self) -> int:
        return self.x_matrix.shape[1]

    @cached_property
    def lipschitz(self) -> float:
        """Largest eigenvalue of X^T X."""
        x = self.x_matrix
        if min(x.shape) <= 2:
            return float(np.linalg.norm(x, 2) ** 2)
        v0 = np.ones(min(x.shape))
        s = svds(x, k=1, return_singular_vectors=False, v0=v0, tol=1e-12)
        return float(s[0] ** 2)


def generate_instance(p: int, delta: float, prior: SignalPrior, sigma_w: float, seed: int) -> Instance:
    """Draw (X, beta, w) for dimension p; each block comes from its own stream of ``seed``."""
    if p < 2:
        raise DomainError("p must be >= 2")
    if not delta > 0.0:
        raise DomainError("delta must be > 0")
    if not sigma_w >= 0.0:
        raise DomainError("sigma_w must be >= 0")
    n = int(round(delta * p))
    if n < 1:
        raise DomainError(f"n = round({delta} * {p}) = 0")
    beta = sample_signal(prior, p, seed, SIGNAL)
    x = make_rng(seed, DESIGN).standard_normal((n, p))
    x /= math.sqrt(n)
    w = sigma_w * make_rng(seed, NOISE).standard_normal(n)
    y = x @ beta + w
    for a in (x, beta, w, y):
        a.setflags(write=False)
    return Instance(x, beta, w, y, n / p, int(seed), float(sigma_w))


# ---------------------------------------------------------------------------
# direct solver


def penalty(beta: np.ndarray, q: float) -> float:
    return float(np.sum(np.abs(beta) ** q))


def objective(inst: Instance, beta: np.ndarray, lam: float, q: float) -> float:
    """0.5 ||y - X beta||^2 + lam ||beta||_q^q."""
    r = inst.y - inst.x_matrix @ beta
    return 0.5 * float(r @ r) + lam * penalty(beta, q)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    objective: float
    grad_map_norm: float


def lqls_solve(
    inst: Instance,
    lam: float,
    q: float,
    tol: float = 1e-10,
    beta0: Optional[np.ndarray] = None,
    max_iter: int = MAX_ITER,
    return_info: bool = False,
):
    """Minimize 0.5 ||y - X beta||^2 + lam ||beta||_q^q by accelerated proximal gradient.

    Step 1/L with L the largest eigenvalue of X^T X; momentum is reset
    whenever the objective increases. Stops once the relative objective
    decrease is below ``tol`` and the gradient-mapping norm is below
    ``tol * sqrt(p)``.
    """
    q = check_exponent(q)
    if not lam >= 0.0:
        raise DomainError(f"lambda={lam!r} must be >= 0")
    if lam == 0.0 and q == 1.0 and inst.delta < 1.0:
        raise DomainError("lambda = 0 with n < p has no unique solution")
    x, y = inst.x_matrix, inst.y
    big_l = inst.lipschitz
    step = 1.0 / big_l
    thr = lam * step
    p = inst.p

    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    xb = x @ beta
    r = y - xb
    obj = 0.5 * float(r @ r) + lam * penalty(beta, q)
    ext, x_ext = beta.copy(), xb.copy()
    k = 1.0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        grad = x.T @ (x_ext - y)
        new = prox(ext - step * grad, thr, q)
        x_new = x @ new
        r = y - x_new
        obj_new = 0.5 * float(r @ r) + lam * penalty(new, q)
        gnorm = big_l * float(np.linalg.norm(ext - new))
        if obj_new > obj and k > 1.0:
            # restart momentum from the last accepted point
            ext, x_ext, k = beta, xb, 1.0
            continue
        # a plain step can rise by round-off only
        decrease = max(obj - obj_new, 0.0) / max(abs(obj_new), np.finfo(float).tiny)
        k_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * k * k))
        mom = (k - 1.0) / k_next
        ext = new + mom * (new - beta)
        x_ext = x_new + mom * (x_new - xb)
        beta, xb, obj, k = new, x_new, obj_new, k_next
        if decrease < tol and gnorm < tol * math.sqrt(p):
            break
    else:
        raise ConvergenceError(
            f"proximal gradient hit {max_iter} iterations (gradient-mapping norm {gnorm:.3g})",
            residual=gnorm,
        )
    if return_info:
        return beta, SolveInfo(it, obj, gnorm)
    return beta


# ---------------------------------------------------------------------------
# AMP


@dataclass(frozen=True)
class AMPState:
    """Iterate t of AMP. ``onsager`` is the (1/delta) <eta'> factor used to form z_t."""

    beta_t: np.ndarray = field(repr=False)
    z_t: np.ndarray = field(repr=False)
    tau_t: float
    t: int
    onsager: float


@dataclass(frozen=True)
class AMPResult:
    states: list
    converged: bool
    lam: float

    @property
    def final(self) -> AMPState:
        return self.states[-1]

    @property
    def iterations(self) -> int:
        return self.states[-1].t


def amp_run(inst: Instance, q: float, chi: float, max_t: int = 1000, tol: float = 1e-10) -> AMPResult:
    """Approximate message passing with threshold theta_t = chi * tau_t^(2 - q).

    tau_t is estimated by ||z_t|| / sqrt(n). ``lam`` of the result is the
    penalty level whose LQLS solution is the AMP fixed point,
    theta (1 - <eta'>/delta), evaluated at the last iterate.
    """
    q = check_exponent(q)
    if not chi > chi_min(inst.delta, q):
        raise DomainError(f"chi={chi!r} must exceed chi_min={chi_min(inst.delta, q)!r}")
    x, y, delta = inst.x_matrix, inst.y, inst.delta
    n, p = inst.n, inst.p
    beta = np.zeros(p)
    z = np.array(y, dtype=float)
    tau = float(np.linalg.norm(z)) / math.sqrt(n)
    states = [AMPState(beta, z, tau, 0, 0.0)]
    converged = False
    lam = math.nan
    for t in range(max_t):
        theta = chi * tau ** (2.0 - q)
        v = x.T @ z + beta
        new = prox(v, theta, q)
        b = float(np.mean(prox_d1(v, theta, q))) / delta
        lam = theta * (1.0 - b)
        z = y - x @ new + b * z
        tau = float(np.linalg.norm(z)) / math.sqrt(n)
        if not (tau <= DIVERGENCE_TAU):
            raise DivergenceError(f"AMP diverged at t={t + 1} (tau={tau!r})", residual=tau)
        change = float(np.sum(np.square(new - beta))) / p
        beta = new
        states.append(AMPState(beta, z, tau, t + 1, b))
        if change < tol:
            converged = True
            break
    return AMPResult(states, converged, lam)


# ---------------------------------------------------------------------------
# error and tuning


def empirical_mse(beta_hat: np.ndarray, beta_true: np.ndarray) -> float:
    """||beta_hat - beta_true||^2 / p, with an exactly rounded sum."""
    a = np.asarray(beta_hat, dtype=float)
    b = np.asarray(beta_true, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("estimates must be 1-D arrays of equal length")
    d = a - b
    return math.fsum(d * d) / a.size


def tuning_grid(lam_center: float, points: int = 40, span: float = 10.0) -> np.ndarray:
    """Log-spaced penalty levels from lam_center/span to lam_center*span."""
    if not lam_center > 0.0:
        raise DomainError("lam_center must be > 0")
    return np.geomspace(lam_center / span, lam_center * span, points)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_lambda_mse(
    inst: Instance,
    q: float,
    lambda_grid: Sequence[float],
    refine_steps: int = 10,
    tol: float = 1e-7,
) -> tuple[float, float]:
    """Oracle tuning: smallest ||beta_hat(lambda) - beta||^2/p over the grid.

    Solves are warm-started along the grid. A golden-section pass in log
    lambda between the neighbours of the best grid point then looks for a
    lower value; it only ever replaces the best if it improves on it.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("lambda grid must be a nonempty 1-D array")
    if np.any(np.diff(grid) < 0):
        raise DomainError("lambda grid must be sorted")
    betas, mses = [], []
    warm = None
    for lam in grid:
        warm = lqls_solve(inst, float(lam), q, tol=tol, beta0=warm)
        betas.append(warm)
        mses.append(empirical_mse(warm, inst.beta_true))
    i = int(np.argmin(mses))
    best_lam, best_mse = float(grid[i]), mses[i]
    if grid.size < 3 or refine_steps <= 0 or grid[0] <= 0.0:
        return best_lam, best_mse

    lo = math.log(grid[max(i - 1, 0)])
    hi = math.log(grid[min(i + 1, grid.size - 1)])
    start = betas[i]

    def f(s):
        nonlocal best_lam, best_mse
        lam = math.exp(s)
        m = empirical_mse(lqls_solve(inst, lam, q, tol=tol, beta0=start), inst.beta_true)
        if m < best_mse:
            best_lam, best_mse = lam, m
        return m

    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(refine_steps):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return best_lam, best_mse
