"""Per-firm misspecified OLS demand fits and the induced myopic price.

Two equivalent coordinate systems are supported: raw price/quantity
histories (the stochastic side) and the ``(tau, U, V)`` moment state used
by the deterministic fluid dynamics, where ``U`` holds running price means
and ``V`` accumulated price co-movements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHistory
from .market import MarketParams

__all__ = [
    "OlsFit",
    "MomentState",
    "ols_from_history",
    "price_from_ols",
    "posted_price",
    "posted_price_from_arrays",
    "ols_fit_from_moments",
]


@dataclass
class OlsFit:
    """Intercept/slope of a one-regressor demand fit q(p) = alpha + beta * p."""

    alpha_hat: float
    beta_hat: float


@dataclass
class MomentState:
    """Moment coordinates of the price process at scaled time ``tau``.

    ``u`` is the vector of running price means, ``v`` the accumulated
    (tau-scaled) price covariance matrix. ``v`` must be symmetric with a
    strictly positive diagonal; ``u`` must lie in the price box.
    """

    tau: float
    u: np.ndarray
    v: np.ndarray

    def validate(self, params: MarketParams) -> "MomentState":
        n = params.n_firms
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != (n,) or v.shape != (n, n):
            raise ValueError(f"state shapes {u.shape}/{v.shape} do not match n_firms={n}")
        if not self.tau >= 1.0:
            raise ValueError(f"tau must be >= 1 (got {self.tau})")
        if not np.allclose(v, v.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(v).max()))):
            raise ValueError("v must be symmetric")
        if not (np.diag(v) > 0).all():
            raise ValueError("v must have a strictly positive diagonal")
        if (u < params.p_min - 1e-12).any() or (u > params.p_max + 1e-12).any():
            raise ValueError("u must lie inside the price box")
        return self


def ols_from_history(prices, quantities) -> OlsFit:
    """Least-squares fit of quantities on own prices (two-pass, centered).

    Raises DegenerateHistory when the prices carry no variance.
    """
    p = np.asarray(prices, dtype=float)
    q = np.asarray(quantities, dtype=float)
    if p.ndim != 1 or p.shape != q.shape:
        raise ValueError("prices and quantities must be equal-length 1-d series")
    if p.size < 2:
        raise ValueError("need at least 2 observations")
    dp = p - p.mean()
    r = float(dp @ dp)
    if r <= 0.0:
        raise DegenerateHistory("all prices identical: OLS slope undefined")
    s = float(dp @ (q - q.mean()))
    beta = s / r
    alpha = float(q.mean() - beta * p.mean())
    return OlsFit(alpha_hat=alpha, beta_hat=beta)


def price_from_ols(fit: OlsFit, mean_quantity: float, bounds) -> float:
    """Myopic profit maximizer of p * (alpha + beta p) over the price box.

    A nonnegative fitted slope makes predicted profit increasing across the
    box (realized quantities are positive), so the cap is the maximizer.
    """
    if not mean_quantity > 0:
        raise ValueError("mean_quantity must be > 0")
    lo, hi = float(bounds[0]), float(bounds[1])
    if fit.beta_hat < 0.0:
        p = -fit.alpha_hat / (2.0 * fit.beta_hat)
        return min(max(p, lo), hi)
    return hi


def posted_price_from_arrays(params: MarketParams, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vector of misspecified-OLS prices implied by moment coordinates.

    Componentwise: with ``B_i = b V_ii - c * mean_{j != i} V_ij`` the fitted
    own-price slope is negative iff ``B_i > 0``; then the interior optimum
    ``((a + c Ubar_{-i}) V_ii - c U_i Vbar_{i,-i}) / (2 B_i)`` is clipped to
    the price box. Otherwise the cap is posted.
    """
    a, b, c = params.a, params.b, params.c
    n = params.n_firms
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    vii = np.diag(v)
    ubar = (u.sum() - u) / (n - 1)
    vbar = (v.sum(axis=1) - vii) / (n - 1)
    bi = b * vii - c * vbar
    out = np.full(n, params.p_max, dtype=float)
    ols = bi > 0.0
    if ols.any():
        num = (a + c * ubar[ols]) * vii[ols] - c * u[ols] * vbar[ols]
        out[ols] = np.clip(num / (2.0 * bi[ols]), params.p_min, params.p_max)
    return out


def posted_price(params: MarketParams, state: MomentState) -> np.ndarray:
    """Posted-price vector at a moment state (see posted_price_from_arrays)."""
    return posted_price_from_arrays(params, state.u, state.v)


def ols_fit_from_moments(params: MarketParams, state: MomentState) -> list[OlsFit]:
    """Per-firm fitted (alpha, beta) expressed in moment coordinates.

    beta_i = -b + c * Vbar_{i,-i} / V_ii and
    alpha_i = a + c * Ubar_{-i} - c * U_i * Vbar_{i,-i} / V_ii; feeding the
    result to price_from_ols reproduces posted_price.
    """
    a, b, c = params.a, params.b, params.c
    n = params.n_firms
    u = np.asarray(state.u, dtype=float)
    v = np.asarray(state.v, dtype=float)
    vii = np.diag(v)
    if not (vii > 0).all():
        raise ValueError("V_ii must be strictly positive")
    ubar = (u.sum() - u) / (n - 1)
    vbar = (v.sum(axis=1) - vii) / (n - 1)
    ratio = vbar / vii
    beta = -b + c * ratio
    alpha = a + c * ubar - c * u * ratio
    return [OlsFit(alpha_hat=float(al), beta_hat=float(be)) for al, be in zip(alpha, beta)]
