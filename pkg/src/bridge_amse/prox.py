"""Proximal operator of chi * |z|^q for 1 <= q <= 2 and its partial derivatives.

    eta_q(u; chi) = argmin_z  0.5 * (u - z)^2 + chi * |z|^q

Closed forms exist at the two ends of the range:

    q = 1:  eta = sign(u) * max(|u| - chi, 0)      (soft threshold)
    q = 2:  eta = u / (1 + 2 chi)                  (ridge shrinkage)

For 1 < q < 2 the magnitude v = |eta| is the unique root of
``v + chi*q*v**(q-1) = |u|`` on [0, |u|]. The root is found by Newton's method
in s = log(v): the map s -> exp(s) + c*exp((q-1)*s) is increasing and convex,
so Newton started to the right of the root decreases monotonically onto it.
A bisection pass in log space catches anything Newton leaves unconverged.

All functions are vectorized; the scalar entry points run the same array code
on a length-one array, so scalar and vector results agree bit for bit.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, UnsupportedOperation

#: q values this close to 1 or 2 use the closed form.
SNAP_TOL = 1e-9
#: Relative residual accepted for the scalar root.
RESIDUAL_TOL = 1e-12
MAX_NEWTON = 100
_STEP_TOL = 1e-14
_LOG_FLOOR = float(np.log(np.finfo(float).tiny))


def check_exponent(q: float) -> float:
    """Validate q in [1, 2] and snap values within ``SNAP_TOL`` of the ends."""
    q = float(q)
    if not np.isfinite(q) or q < 1.0 - SNAP_TOL or q > 2.0 + SNAP_TOL:
        raise DomainError(f"exponent q={q!r} outside [1, 2]")
    if abs(q - 1.0) < SNAP_TOL:
        return 1.0
    if abs(q - 2.0) < SNAP_TOL:
        return 2.0
    return q


def _check_chi(chi: float) -> float:
    chi = float(chi)
    if not chi >= 0.0:
        raise DomainError(f"threshold chi={chi!r} must be >= 0")
    return chi


def _magnitude_root(a: np.ndarray, c: float, q: float, max_newton: int = MAX_NEWTON) -> np.ndarray:
    """Solve v + c*v**(q-1) = a for v >= 0, elementwise, with a >= 0 and c > 0."""
    v = np.zeros_like(a)
    pos = a > 0.0
    if not pos.any():
        return v
    ap = a[pos]
    qm1 = q - 1.0
    log_a = np.log(ap)
    # Both candidates sit at or right of the root; the smaller is the tighter one.
    s = np.minimum(log_a, (log_a - np.log(c)) / qm1)
    # Roots below exp(_LOG_FLOOR) are returned as 0.
    under = np.exp(_LOG_FLOOR) + c * np.exp(qm1 * _LOG_FLOOR) >= ap
    s = np.where(under, _LOG_FLOOR, s)
    step = np.where(under, 0.0, np.inf)
    # converged entries are frozen so each result is independent of its batch
    done = under.copy()
    for _ in range(max_newton):
        e1 = np.exp(s)
        e2 = c * np.exp(qm1 * s)
        step = np.where(done, step, (e1 + e2 - ap) / (e1 + qm1 * e2))
        s = np.where(done, s, s - step)
        done |= np.abs(step) <= _STEP_TOL
        if done.all():
            break
    root = np.where(under, 0.0, np.exp(s))
    resid = np.abs(root + c * root**qm1 - ap)
    bad = ~under & (~(resid <= RESIDUAL_TOL * np.maximum(1.0, ap)) | ~(np.abs(step) <= _STEP_TOL))
    if bad.any():
        root[bad] = _bisect_log(ap[bad], c, q)
    v[pos] = root
    return v


def _bisect_log(a: np.ndarray, c: float, q: float) -> np.ndarray:
    qm1 = q - 1.0
    log_a = np.log(a)
    hi = np.minimum(log_a, (log_a - np.log(c)) / qm1)
    # v + c v^(q-1) <= a whenever v <= a/2 and c v^(q-1) <= a/2
    lo = np.minimum(log_a - np.log(2.0), (log_a - np.log(2.0 * c)) / qm1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        vm = np.exp(mid)
        above = vm + c * vm**qm1 > a
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= 1e-16 * np.maximum(1.0, np.abs(hi))):
            break
    return np.exp(0.5 * (lo + hi))


def prox(u, chi: float, q: float) -> np.ndarray:
    """Array version of eta_q(u; chi); ``u`` may have any shape."""
    q = check_exponent(q)
    chi = _check_chi(chi)
    u = np.asarray(u, dtype=float)
    if chi == 0.0:
        return u.copy()
    if q == 1.0:
        return np.sign(u) * np.maximum(np.abs(u) - chi, 0.0)
    if q == 2.0:
        return u / (1.0 + 2.0 * chi)
    flat = np.abs(u).ravel()
    v = _magnitude_root(flat, chi * q, q).reshape(u.shape)
    return np.copysign(v, u)


def prox_residual(u, chi: float, q: float, eta=None) -> np.ndarray:
    """Return u - eta_q(u; chi) without cancellation.

    For 1 < q <= 2 this is chi*q*sign(u)*|eta|**(q-1); for q = 1 it is the
    clipped input sign(u)*min(|u|, chi).
    """
    q = check_exponent(q)
    chi = _check_chi(chi)
    u = np.asarray(u, dtype=float)
    if q == 1.0:
        return np.sign(u) * np.minimum(np.abs(u), chi)
    if eta is None:
        eta = prox(u, chi, q)
    return chi * q * np.sign(u) * np.abs(eta) ** (q - 1.0)


def prox_vector(u, chi: float, q: float) -> np.ndarray:
    """Componentwise eta_q over a one-dimensional array."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise DomainError("prox_vector expects a one-dimensional array")
    return prox(u, chi, q)


def prox_eval(u: float, chi: float, q: float) -> float:
    """Scalar eta_q(u; chi)."""
    return float(prox(np.array([u], dtype=float), chi, q)[0])


def _d1(u: np.ndarray, chi: float, q: float) -> np.ndarray:
    if q == 1.0:
        return (np.abs(u) > chi).astype(float)
    if q == 2.0:
        return np.full(u.shape, 1.0 / (1.0 + 2.0 * chi))
    if chi == 0.0:
        return np.ones(u.shape)
    v = np.abs(prox(u, chi, q))
    # 1/(1 + k v^(q-2)) rewritten to stay finite as v -> 0
    t = v ** (2.0 - q)
    return t / (t + chi * q * (q - 1.0))


def prox_d1(u, chi: float, q: float):
    """Derivative of eta_q(u; chi) with respect to u.

    Returns a float for scalar input and an array otherwise. At u = 0 and
    1 < q < 2 the derivative is 0.
    """
    q = check_exponent(q)
    chi = _check_chi(chi)
    arr = np.asarray(u, dtype=float)
    out = _d1(np.atleast_1d(arr), chi, q)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def prox_d2(u, chi: float, q: float):
    """Derivative of eta_q(u; chi) with respect to chi (1 < q <= 2 only)."""
    q = check_exponent(q)
    chi = _check_chi(chi)
    if q == 1.0:
        raise UnsupportedOperation("d/dchi of the soft threshold is not used and is undefined at the kink")
    arr = np.asarray(u, dtype=float)
    u1 = np.atleast_1d(arr)
    if q == 2.0:
        out = -2.0 * u1 / (1.0 + 2.0 * chi) ** 2
    else:
        if chi == 0.0:
            out = -q * np.sign(u1) * np.abs(u1) ** (q - 1.0)
        else:
            v = np.abs(prox(u1, chi, q))
            out = -q * np.sign(u1) * v / (v ** (2.0 - q) + chi * q * (q - 1.0))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)
