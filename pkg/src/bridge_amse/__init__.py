"""Asymptotic mean square error of bridge regression (l_q-penalized least squares, 1 <= q <= 2).

The package computes state-evolution fixed points, phase-transition curves and
small-noise expansions of the AMSE, and checks them against finite-sample
simulation with a proximal-gradient solver and approximate message passing.
"""

from .errors import (
    BracketError,
    ConvergenceError,
    DivergenceError,
    DomainError,
    NoSolutionError,
    QuadratureError,
    UnsupportedOperation,
)
from .finite_sample import (
    AMPState,
    Instance,
    amp_run,
    empirical_mse,
    generate_instance,
    lqls_solve,
    optimal_lambda_mse,
    tuning_grid,
)
from .prior import QuadratureRule, SignalPrior, expect_bz, gauss_hermite, moment_absG, moment_absZ, sample_signal
from .prox import prox, prox_d1, prox_d2, prox_eval, prox_vector
from .risk import PhasePoint, RiskQuery, chi_min, m1_curve, mq_curve, optimal_chi, risk_R
from .state_evolution import (
    ExpansionResult,
    Regime,
    SEFixedPoint,
    amp_recursion,
    expansion,
    lambda_of_chi,
    loss_at_fixed_point,
    solve_fixed_lambda,
    solve_tuned,
)

__version__ = "0.1.0"
