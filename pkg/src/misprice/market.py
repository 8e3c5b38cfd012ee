"""Linear demand primitives and closed-form price benchmarks.

The market has ``n_firms`` symmetric firms. Firm ``i`` facing the price
vector ``p`` sells expected quantity

    a - b * p[i] + (c / (n_firms - 1)) * sum(p[j] for j != i),

with prices restricted to the box ``[p_min, p_max]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError

# Small strictly-positive floor that never binds at the Nash price for
# sensible parameters; used when a config leaves p_min unspecified.
DEFAULT_FLOOR_FRACTION = 0.05


@dataclass(frozen=True)
class MarketParams:
    """Primitives of the symmetric linear-demand market.

    Attributes:
        a: Demand intercept (quantity units), a > 0.
        b: Own-price slope (quantity per price), b > 0.
        c: Cross-price slope (quantity per price), 0 < c < b.
        n_firms: Number of firms, at least 2.
        p_min: Price floor; defaults to ``0.05 * a / b``.
        p_max: Price cap; defaults to ``a / b``. Must satisfy
            ``a / (2b - c) < p_max <= a / b`` so the cap neither forces
            sub-Nash pricing nor allows negative expected demand.
    """

    a: float
    b: float
    c: float
    n_firms: int = 2
    p_min: float | None = None
    p_max: float | None = None

    def __post_init__(self):
        if self.p_min is None:
            object.__setattr__(self, "p_min", DEFAULT_FLOOR_FRACTION * self.a / self.b)
        if self.p_max is None:
            object.__setattr__(self, "p_max", self.a / self.b)
        validate(self)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MarketParams":
        known = {"a", "b", "c", "n_firms", "p_min", "p_max"}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown market parameter(s): {sorted(unknown)}")
        return cls(**d)


def validate(params: MarketParams) -> MarketParams:
    """Check every standing inequality; raise DomainError naming the violation."""
    a, b, c = params.a, params.b, params.c
    if not a > 0:
        raise DomainError(f"a > 0 violated (a={a})")
    if not b > 0:
        raise DomainError(f"b > 0 violated (b={b})")
    if not c > 0:
        raise DomainError(f"c > 0 violated (c={c})")
    if not b > c:
        raise DomainError(f"b > c violated (b={b}, c={c})")
    if not (isinstance(params.n_firms, (int, np.integer)) and params.n_firms >= 2):
        raise DomainError(f"n_firms must be an integer >= 2 (got {params.n_firms})")
    nash = a / (2.0 * b - c)
    if not params.p_min > 0:
        raise DomainError(f"p_min > 0 violated (p_min={params.p_min})")
    if not params.p_max > nash:
        raise DomainError(
            f"p_max below Nash price: need p_max > a/(2b-c) = {nash} (p_max={params.p_max})"
        )
    if not params.p_max <= a / b:
        raise DomainError(
            f"p_max <= a/b violated: expected demand can go negative (p_max={params.p_max}, a/b={a / b})"
        )
    if not params.p_min <= nash:
        raise DomainError(
            f"p_min above Nash price: need p_min <= a/(2b-c) = {nash} (p_min={params.p_min})"
        )
    return params


def expected_demand(params: MarketParams, prices, firm: int) -> float:
    """Expected quantity for one firm at a full price vector.

    Raises IndexError when ``firm`` is not a valid 0-based firm index.
    """
    p = np.asarray(prices, dtype=float)
    if p.shape != (params.n_firms,):
        raise ValueError(f"prices must have shape ({params.n_firms},), got {p.shape}")
    if not 0 <= firm < params.n_firms:
        raise IndexError(f"firm index {firm} outside 0..{params.n_firms - 1}")
    rivals = p.sum() - p[firm]
    return float(params.a - params.b * p[firm] + params.c * rivals / (params.n_firms - 1))


def best_response(params: MarketParams, pbar_opponents: float) -> float:
    """Profit-maximizing price against a rival average price (unclipped)."""
    return (params.a + params.c * pbar_opponents) / (2.0 * params.b)


def nash_price(params: MarketParams) -> float:
    """Symmetric competitive fixed point a / (2b - c)."""
    return params.a / (2.0 * params.b - params.c)


def monopoly_price(params: MarketParams) -> float:
    """Joint-profit-maximizing symmetric price a / (2(b - c))."""
    return params.a / (2.0 * (params.b - params.c))


def capped_monopoly(params: MarketParams) -> float:
    """Monopoly price truncated at the price cap."""
    return min(monopoly_price(params), params.p_max)
