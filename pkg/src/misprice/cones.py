"""Best-response cone geometry and exploration-mean priors.

The upper (lower) cone collects exploration-mean vectors where every firm
sits strictly above (below) its best response to the rivals' average mean;
starting there, the learning dynamics produce supra-competitive prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, EmptySupport, RangeError
from .market import MarketParams, best_response, capped_monopoly, nash_price

__all__ = [
    "ConeLabel",
    "RandomIntervalBand",
    "CenterSample",
    "ConeProbEstimate",
    "classify_cone",
    "br_gaps",
    "random_interval_sample",
    "random_interval_sample_many",
    "center_dispersion_support",
    "center_dispersion_sample",
    "cone_probability_bound",
    "cone_probability_bound_limit",
    "cone_probability_mc",
    "conduct_price",
    "implied_conduct",
]

DEFAULT_BOUNDARY_TOL = 1e-9


class ConeLabel(Enum):
    UPPER_CONE = "upper"
    LOWER_CONE = "lower"
    BOUNDARY = "boundary"
    NEITHER = "neither"


@dataclass(frozen=True)
class RandomIntervalBand:
    """Outer anchor band [lower, upper] containing the Nash price."""

    lower: float
    upper: float

    def validate(self, params: MarketParams, strict: bool = True) -> "RandomIntervalBand":
        nash = nash_price(params)
        if not (params.p_min - 1e-12 <= self.lower <= self.upper <= params.p_max + 1e-12):
            raise DomainError("band must satisfy p_min <= lower <= upper <= p_max")
        if strict and not self.lower < nash < self.upper:
            raise DomainError(f"band must strictly contain the Nash price {nash}")
        if not strict and not self.lower <= nash <= self.upper:
            raise DomainError(f"band must contain the Nash price {nash}")
        return self


@dataclass
class CenterSample:
    """Draw from the center-dispersion prior plus its realized support."""

    values: np.ndarray
    lower: float
    upper: float
    truncated: bool


@dataclass
class ConeProbEstimate:
    estimate: float
    se: float
    n_samples: int
    n_in_cone: int


def br_gaps(params: MarketParams, mu) -> np.ndarray:
    """Per-firm gap mu_i - BR(mean of the other mus)."""
    m = np.asarray(mu, dtype=float)
    n = params.n_firms
    if m.shape != (n,):
        raise ValueError(f"mu must have shape ({n},)")
    mbar = (m.sum() - m) / (n - 1)
    return m - (params.a + params.c * mbar) / (2.0 * params.b)


def classify_cone(params: MarketParams, mu, tol: float = DEFAULT_BOUNDARY_TOL) -> ConeLabel:
    """Label an exploration-mean vector against the best-response cones.

    Any gap within ``tol`` of zero is reported as BOUNDARY; otherwise the
    strict all-above / all-below checks decide.
    """
    d = br_gaps(params, mu)
    if (np.abs(d) <= tol).any():
        return ConeLabel.BOUNDARY
    if (d > 0).all():
        return ConeLabel.UPPER_CONE
    if (d < 0).all():
        return ConeLabel.LOWER_CONE
    return ConeLabel.NEITHER


def _gaps_many(params: MarketParams, mus: np.ndarray) -> np.ndarray:
    n = mus.shape[1]
    mbar = (mus.sum(axis=1, keepdims=True) - mus) / (n - 1)
    return mus - (params.a + params.c * mbar) / (2.0 * params.b)


def random_interval_sample(
    params: MarketParams, band: RandomIntervalBand, n_firms: int, rng: np.random.Generator
) -> np.ndarray:
    """One draw from the two-anchor random-interval prior.

    The first two coordinates are uniform on the outer band; the remaining
    n_firms - 2 are uniform on the (random) interval they span.
    """
    if n_firms < 2:
        raise ValueError("n_firms must be >= 2")
    x, y = rng.uniform(band.lower, band.upper, size=2)
    lo, hi = (x, y) if x <= y else (y, x)
    rest = rng.uniform(lo, hi, size=n_firms - 2)
    return np.concatenate(([x, y], rest))


def random_interval_sample_many(
    params: MarketParams,
    band: RandomIntervalBand,
    n_firms: int,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized batch of random-interval draws, shape (n_samples, n_firms)."""
    if n_firms < 2:
        raise ValueError("n_firms must be >= 2")
    anchors = rng.uniform(band.lower, band.upper, size=(n_samples, 2))
    lo = anchors.min(axis=1, keepdims=True)
    hi = anchors.max(axis=1, keepdims=True)
    inner = lo + (hi - lo) * rng.uniform(size=(n_samples, n_firms - 2))
    return np.concatenate([anchors, inner], axis=1)


def center_dispersion_support(params: MarketParams, s: float, nu: float):
    """Support of the center-dispersion prior intersected with the box."""
    half = math.sqrt(3.0) * nu
    lo = max(s - half, params.p_min)
    hi = min(s + half, params.p_max)
    if lo > hi:
        raise EmptySupport(
            f"interval [{s - half}, {s + half}] misses the box [{params.p_min}, {params.p_max}]"
        )
    truncated = (s - half < params.p_min - 1e-15) or (s + half > params.p_max + 1e-15)
    return lo, hi, truncated


def center_dispersion_sample(
    params: MarketParams, s: float, nu: float, n_firms: int, rng: np.random.Generator
) -> CenterSample:
    """I.i.d. uniform draws on [s - sqrt(3) nu, s + sqrt(3) nu] within the box.

    With nu = 0 every coordinate equals s. Box truncation is recorded on
    the returned sample.
    """
    lo, hi, truncated = center_dispersion_support(params, s, nu)
    if nu == 0.0:
        values = np.full(n_firms, float(min(max(s, lo), hi)))
    else:
        values = rng.uniform(lo, hi, size=n_firms)
    return CenterSample(values=values, lower=lo, upper=hi, truncated=truncated)


def cone_probability_bound(n_firms: int, r: float) -> float:
    """Closed-form lower bound on the cone-landing probability.

    (N - 1)(2 - r) / (4(N - 1) - r(N - 2)) for the slope ratio r = c/b in
    (0, 1); always at least 1/4.
    """
    if not (isinstance(n_firms, (int, np.integer)) and n_firms >= 2):
        raise DomainError("n_firms must be an integer >= 2")
    if not 0.0 < r < 1.0:
        raise DomainError("r must lie in (0, 1)")
    n = float(n_firms)
    return (n - 1.0) * (2.0 - r) / (4.0 * (n - 1.0) - r * (n - 2.0))


def cone_probability_bound_limit(r: float) -> float:
    """Large-N limit (2 - r) / (4 - r) of the cone-probability bound."""
    if not 0.0 < r < 1.0:
        raise DomainError("r must lie in (0, 1)")
    return (2.0 - r) / (4.0 - r)


def cone_probability_mc(
    params: MarketParams,
    band: RandomIntervalBand,
    n_firms: int,
    n_samples: int,
    rng: np.random.Generator,
    tol: float = DEFAULT_BOUNDARY_TOL,
) -> ConeProbEstimate:
    """Monte-Carlo cone-landing frequency under the random-interval prior.

    Boundary-tolerant draws count as neither cone. Binomial standard error.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    band.validate(params, strict=False)
    mus = random_interval_sample_many(params, band, n_firms, n_samples, rng)
    d = _gaps_many(params, mus)
    interior = (np.abs(d) > tol).all(axis=1)
    in_cone = interior & ((d > 0).all(axis=1) | (d < 0).all(axis=1))
    k = int(in_cone.sum())
    p_hat = k / n_samples
    se = math.sqrt(p_hat * (1.0 - p_hat) / n_samples)
    return ConeProbEstimate(estimate=p_hat, se=se, n_samples=n_samples, n_in_cone=k)


def conduct_price(params: MarketParams, rho: float) -> float:
    """Symmetric self-consistent price when historical prices carry
    pairwise correlation rho: min(p_max, a / (2b - c(1 + rho)))."""
    if not 0.0 <= rho <= 1.0:
        raise RangeError("rho must lie in [0, 1]")
    return min(params.p_max, params.a / (2.0 * params.b - params.c * (1.0 + rho)))


def implied_conduct(params: MarketParams, price: float) -> float:
    """Inverse of conduct_price on its uncapped branch."""
    lo = nash_price(params)
    hi = capped_monopoly(params)
    eps = 1e-12 * max(1.0, abs(price))
    if not (lo - eps <= price <= hi + eps):
        raise RangeError(f"price must lie in [{lo}, {hi}] to imply a conduct weight")
    rho = (2.0 * params.b - params.c - params.a / price) / params.c
    return min(max(rho, 0.0), 1.0)
