"""Sparse signal priors and Gaussian-mixture expectations.

The signal prior is the mixture

    p_beta = (1 - eps) * delta_0 + eps * g

where g has no mass at zero. Expectations E_{B,Z}[f(B, Z)] with Z ~ N(0, 1)
independent of B are computed by summing over the support of B (point masses,
or a quantile-space quadrature for a continuous g) and integrating over Z.

Two Z rules are provided:

* Gauss-Hermite, normalized to the standard normal, with node doubling until
  two successive orders agree (for smooth integrands);
* composite Gauss-Legendre panels on [-L, L], split at caller-supplied kink
  locations and geometrically refined toward each kink (for integrands built
  from the proximal map, which are only piecewise smooth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma

from .errors import DomainError, QuadratureError
from .rng import SIGNAL, make_rng

DEFAULT_GH_ORDER = 61
MAX_GH_ORDER = 61 * 8
GH_AGREEMENT = 1e-9

#: Half-width of the truncated Z domain; P(|Z| > 10) ~ 1.5e-23.
Z_HALF_WIDTH = 10.0
PANEL_NODES = 12
GRADED_NODES = 8
GRADING_LEVELS = 40


# ---------------------------------------------------------------------------
# quadrature rules


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights with sum(w * f(z)) ~ E f(Z), Z ~ N(0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


_gh_order = DEFAULT_GH_ORDER


def set_default_order(order: int) -> None:
    """Set the Gauss-Hermite order used when no rule is passed (process-wide)."""
    global _gh_order
    if int(order) < 2:
        raise DomainError("quadrature order must be >= 2")
    _gh_order = int(order)


def gauss_hermite(order: Optional[int] = None) -> QuadratureRule:
    """Gauss-Hermite rule for the standard normal measure (default order 61)."""
    return _gauss_hermite(_gh_order if order is None else int(order))


@lru_cache(maxsize=16)
def _gauss_hermite(order: int) -> QuadratureRule:
    if order < 2:
        raise DomainError("quadrature order must be >= 2")
    x, w = hermgauss(order)
    nodes = math.sqrt(2.0) * x
    weights = w / math.sqrt(math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, order)


@lru_cache(maxsize=8)
def _legendre(n: int):
    x, w = leggauss(n)
    return x, w


def _graded_segments(lo: float, hi: float, toward: str, levels: int):
    """Split [lo, hi] into segments whose widths halve toward one end."""
    width = hi - lo
    k = np.arange(levels)
    if toward == "lo":
        edges = lo + width * np.concatenate([[0.0], 0.5 ** k[::-1]])
    else:
        edges = hi - width * np.concatenate([0.5 ** k, [0.0]])
    return edges[:-1], edges[1:]


def panel_breaks(
    kinks: Sequence[float] = (),
    half_width: float = Z_HALF_WIDTH,
) -> tuple[np.ndarray, list]:
    """Panel edges (unit-width panels on [-L, L] plus the kinks) and the kinks inside."""
    base = np.arange(-half_width, half_width + 0.5, 1.0)
    inside = [k for k in kinks if -half_width < k < half_width]
    return np.unique(np.concatenate([base, np.asarray(inside, dtype=float)])), inside


def panel_rule(
    kinks: Sequence[float] = (),
    half_width: float = Z_HALF_WIDTH,
    nodes_per_panel: int = PANEL_NODES,
    graded_nodes: int = GRADED_NODES,
    levels: int = GRADING_LEVELS,
) -> QuadratureRule:
    """Composite Gauss-Legendre rule for E f(Z), split and refined at kinks.

    Every panel adjacent to a kink is subdivided geometrically toward it so
    that algebraic singularities of the form |z - k|^a are integrated to near
    machine precision.
    """
    key = tuple(sorted(float(k) for k in kinks))
    return _panel_rule(key, float(half_width), int(nodes_per_panel), int(graded_nodes), int(levels))


@lru_cache(maxsize=256)
def _panel_rule(kinks, half_width, nodes_per_panel, graded_nodes, levels) -> QuadratureRule:
    edges, inside = panel_breaks(kinks, half_width)
    inside = np.asarray(inside, dtype=float)
    lo_all, hi_all = edges[:-1], edges[1:]
    plain_lo, plain_hi, graded = [], [], []
    for lo, hi in zip(lo_all, hi_all):
        at_lo = bool(np.any(inside == lo))
        at_hi = bool(np.any(inside == hi))
        if at_lo and at_hi:
            mid = 0.5 * (lo + hi)
            graded.append(_graded_segments(lo, mid, "lo", levels))
            graded.append(_graded_segments(mid, hi, "hi", levels))
        elif at_lo:
            graded.append(_graded_segments(lo, hi, "lo", levels))
        elif at_hi:
            graded.append(_graded_segments(lo, hi, "hi", levels))
        else:
            plain_lo.append(lo)
            plain_hi.append(hi)
    parts_z, parts_w = [], []
    x, w = _legendre(nodes_per_panel)
    if plain_lo:
        a, b = np.asarray(plain_lo), np.asarray(plain_hi)
        parts_z.append((0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x).ravel())
        parts_w.append((0.5 * (b - a)[:, None] * w).ravel())
    if graded:
        xg, wg = _legendre(graded_nodes)
        a = np.concatenate([g[0] for g in graded])
        b = np.concatenate([g[1] for g in graded])
        parts_z.append((0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * xg).ravel())
        parts_w.append((0.5 * (b - a)[:, None] * wg).ravel())
    z = np.concatenate(parts_z)
    wz = np.concatenate(parts_w) * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    z.setflags(write=False)
    wz.setflags(write=False)
    return QuadratureRule(z, wz, z.size)


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class PowerLawMagnitude:
    """|G| with P(|G| <= t) = (t / scale)**ell on [0, scale]; the sign is symmetric.

    This realizes P(|G| <= t) = Theta(t**ell) near zero.
    """

    ell: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.ell > 0 and self.scale > 0):
            raise DomainError("power-law magnitude needs ell > 0 and scale > 0")

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(u, dtype=float) ** (1.0 / self.ell)

    def moment(self, r: float) -> float:
        return self.scale**r * self.ell / (self.ell + r)

    @classmethod
    def unit_second_moment(cls, ell: float) -> "PowerLawMagnitude":
        # E|G|^2 = scale^2 * ell / (ell + 2) = 1
        return cls(ell, math.sqrt((ell + 2.0) / ell))


@dataclass(frozen=True)
class SignalPrior:
    """p_beta = (1 - epsilon) delta_0 + epsilon g.

    ``g`` is either a finite set of ``atoms`` [(value, weight), ...] or a
    symmetric continuous law given by the quantile function of |G|
    (``magnitude``).
    """

    epsilon: float
    atoms: tuple = ()
    magnitude: Optional[PowerLawMagnitude] = None

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (0.0 < eps < 1.0):
            raise DomainError(f"epsilon={self.epsilon!r} must lie in (0, 1)")
        atoms = tuple((float(v), float(w)) for v, w in self.atoms)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "atoms", atoms)
        if bool(atoms) == (self.magnitude is not None):
            raise DomainError("give exactly one of atoms or magnitude")
        if atoms:
            vals = np.array([a[0] for a in atoms])
            wts = np.array([a[1] for a in atoms])
            if not np.all(np.isfinite(vals)) or np.any(vals == 0.0):
                raise DomainError("atoms must be finite and nonzero (g has no mass at 0)")
            if np.any(wts <= 0.0) or abs(wts.sum() - 1.0) > 1e-9:
                raise DomainError("atom weights must be positive and sum to 1")

    # -- constructors -----------------------------------------------------

    @classmethod
    def two_point(cls, epsilon: float, value: float = 1.0) -> "SignalPrior":
        """g = 0.5 delta_value + 0.5 delta_-value."""
        return cls(epsilon, ((value, 0.5), (-value, 0.5)))

    @classmethod
    def power_law(cls, epsilon: float, ell: float, scale: Optional[float] = None) -> "SignalPrior":
        mag = PowerLawMagnitude.unit_second_moment(ell) if scale is None else PowerLawMagnitude(ell, scale)
        return cls(epsilon, magnitude=mag)

    @classmethod
    def from_config(cls, spec: dict) -> "SignalPrior":
        """Build from ``{epsilon, atoms: [[v, w], ...]}`` or ``{epsilon, power_law: {ell, scale}}``."""
        if "atoms" in spec:
            return cls(spec["epsilon"], tuple(tuple(a) for a in spec["atoms"]))
        if "power_law" in spec:
            pl = spec["power_law"]
            return cls.power_law(spec["epsilon"], pl["ell"], pl.get("scale"))
        raise DomainError("prior spec needs 'atoms' or 'power_law'")

    def to_config(self) -> dict:
        if self.atoms:
            return {"epsilon": self.epsilon, "atoms": [list(a) for a in self.atoms]}
        return {"epsilon": self.epsilon, "power_law": {"ell": self.magnitude.ell, "scale": self.magnitude.scale}}

    # -- support ----------------------------------------------------------

    def nonzero_support(self) -> tuple[np.ndarray, np.ndarray]:
        """Values and weights (summing to 1) representing g."""
        if self.atoms:
            return _atom_arrays(self.atoms)
        return _magnitude_nodes(self.magnitude)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Values and probabilities for B, including the point mass at 0."""
        vals, wts = self.nonzero_support()
        return (np.concatenate([[0.0], vals]), np.concatenate([[1.0 - self.epsilon], self.epsilon * wts]))

    @property
    def min_abs_atom(self) -> float:
        """Smallest |G| on the support (0 for continuous g with mass near 0)."""
        if self.atoms:
            return float(min(abs(v) for v, _ in self.atoms))
        return 0.0

    @property
    def second_moment(self) -> float:
        """E B^2 = eps * E G^2."""
        return self.epsilon * moment_absG(self, 2.0)


@lru_cache(maxsize=64)
def _atom_arrays(atoms: tuple):
    vals = np.array([a[0] for a in atoms])
    wts = np.array([a[1] for a in atoms])
    return vals, wts / wts.sum()


@lru_cache(maxsize=16)
def _magnitude_nodes(mag: PowerLawMagnitude, levels: int = GRADING_LEVELS, n: int = PANEL_NODES):
    # quantile-space rule on (0, 1), graded toward both ends
    lo1, hi1 = _graded_segments(0.0, 0.5, "lo", levels)
    lo2, hi2 = _graded_segments(0.5, 1.0, "hi", levels)
    a = np.concatenate([lo1, lo2])
    b = np.concatenate([hi1, hi2])
    x, w = _legendre(n)
    u = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x).ravel()
    wu = (0.5 * (b - a)[:, None] * w).ravel()
    m = mag.quantile(u)
    vals = np.concatenate([m, -m])
    wts = np.concatenate([wu, wu]) * 0.5
    return vals, wts


# ---------------------------------------------------------------------------
# expectations


def _check_finite(vals: np.ndarray, b: np.ndarray, z: np.ndarray):
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        bb = np.broadcast_to(b, vals.shape).ravel()[i]
        zz = np.broadcast_to(z, vals.shape).ravel()[i]
        raise QuadratureError(f"integrand is not finite at b={bb!r}, z={zz!r}", b=bb, z=zz)


def expect_bz(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    prior: SignalPrior,
    rule: Optional[QuadratureRule] = None,
    kinks: Optional[Callable[[float], Sequence[float]]] = None,
) -> float:
    """E_{B,Z} f(B, Z) for B ~ prior and Z ~ N(0, 1) independent.

    ``f`` must broadcast over numpy arrays. With ``kinks`` (a map from b to
    the z locations where f(b, .) is not smooth) each b gets its own panel
    rule; otherwise ``rule`` is used, or Gauss-Hermite with node doubling
    when ``rule`` is None.
    """
    b_vals, b_wts = prior.support()
    if kinks is not None:
        zs, ws, bs = [], [], []
        for b in b_vals:
            r = panel_rule(kinks(b))
            zs.append(r.nodes)
            ws.append(r.weights)
            bs.append(np.full(r.nodes.size, b))
        lengths = [len(z) for z in zs]
        z = np.concatenate(zs)
        bb = np.concatenate(bs)
        vals = np.asarray(f(bb, z), dtype=float)
        _check_finite(vals, bb, z)
        per_b = np.add.reduceat(vals * np.concatenate(ws), np.cumsum([0] + lengths[:-1]))
        return float(np.dot(b_wts, per_b))
    if rule is not None:
        return _expect_on_rule(f, b_vals, b_wts, rule)
    order = _gh_order
    prev = _expect_on_rule(f, b_vals, b_wts, gauss_hermite(order))
    while order * 2 <= max(MAX_GH_ORDER, 2 * _gh_order):
        order *= 2
        cur = _expect_on_rule(f, b_vals, b_wts, gauss_hermite(order))
        if abs(cur - prev) <= GH_AGREEMENT * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise QuadratureError(f"Gauss-Hermite orders up to {order} did not agree to {GH_AGREEMENT}")


def _expect_on_rule(f, b_vals, b_wts, rule: QuadratureRule) -> float:
    b = b_vals[:, None]
    z = rule.nodes[None, :]
    vals = np.asarray(f(b, z), dtype=float)
    vals = np.broadcast_to(vals, (b_vals.size, rule.nodes.size))
    _check_finite(vals, b, z)
    return float(b_wts @ (vals @ rule.weights))


def expect_z(f: Callable[[np.ndarray], np.ndarray], kinks: Sequence[float] = ()) -> float:
    """E f(Z) on the panel rule with the given kinks."""
    r = panel_rule(kinks)
    vals = np.asarray(f(r.nodes), dtype=float)
    _check_finite(vals, np.zeros(1), r.nodes)
    return float(np.dot(r.weights, vals))


def moment_absZ(q: float) -> float:
    """E|Z|^q = 2^(q/2) Gamma((q+1)/2) / sqrt(pi)."""
    q = float(q)
    if not (1.0 <= q <= 2.0):
        raise DomainError(f"q={q!r} outside [1, 2]")
    return 2.0 ** (q / 2.0) * gamma((q + 1.0) / 2.0) / math.sqrt(math.pi)


def moment_absG(prior: SignalPrior, r: float) -> float:
    """E|G|^r for the nonzero part of the prior."""
    if r < 0:
        raise DomainError("moment order must be >= 0")
    if r == 0:
        return 1.0
    vals, wts = prior.nonzero_support()
    m = float(np.dot(wts, np.abs(vals) ** r))
    if not math.isfinite(m):
        raise QuadratureError(f"E|G|^{r} is not finite for this prior")
    return m


def sample_signal(prior: SignalPrior, p: int, seed: int, stream: int = SIGNAL) -> np.ndarray:
    """Draw p i.i.d. coordinates from the prior on the (seed, stream) key."""
    if p < 1:
        raise DomainError("p must be >= 1")
    rng = make_rng(seed, stream)
    nonzero = rng.random(p) < prior.epsilon
    k = int(nonzero.sum())
    beta = np.zeros(p)
    if prior.atoms:
        vals, wts = _atom_arrays(prior.atoms)
        beta[nonzero] = vals[rng.choice(vals.size, size=k, p=wts)]
    else:
        mags = prior.magnitude.quantile(rng.random(k))
        signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
        beta[nonzero] = signs * mags
    return beta
