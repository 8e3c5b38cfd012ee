"""Calibrated heterogeneous-household logit market on synthetic data.

Households choose among products (plus an outside option) with logit
probabilities driven by household price coefficients, base utilities and
product fixed effects. Fixed effects are calibrated so model shares match
observed shares at observed prices, and product shadow costs so observed
prices satisfy the Nash first-order conditions. The explore-then-exploit
pipeline has each product fit a naive own-price binary logit to its history
and post the myopic profit maximizer.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError, DegenerateHistory, DomainError, NotConverged

__all__ = [
    "LogitMarket",
    "NaiveLogitFit",
    "CalibratedPipelineResult",
    "shares",
    "share_own_derivative",
    "share_price_derivatives",
    "calibrate_xi",
    "calibrate_lambda",
    "calibrated",
    "nash_solve",
    "monopoly_solve",
    "naive_logit_fit",
    "logit_price_opt",
    "run_calibrated_pipeline",
    "synth_market",
    "write_pipeline_csv",
]

SHARE_FLOOR = 1e-12
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class LogitMarket:
    """Households (weights, price coefficients, base utilities), products
    (fixed effect xi, shadow cost lam), and the observed (p0, s0) targets.

    ``utility_base[h, j]`` is household h's non-price utility for product j
    before the fixed effect. ``xi``/``lam`` are None until calibrated.
    """

    weights: np.ndarray  # (H,)
    price_coeffs: np.ndarray  # (H,), all < 0
    utility_base: np.ndarray  # (H, J)
    p0: np.ndarray  # (J,)
    s0: np.ndarray  # (J,)
    price_ceiling: float
    xi: np.ndarray | None = None
    lam: np.ndarray | None = None

    @property
    def n_products(self) -> int:
        return self.p0.shape[0]

    @property
    def n_households(self) -> int:
        return self.weights.shape[0]

    @property
    def norm_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def validate(self) -> "LogitMarket":
        h, j = self.n_households, self.n_products
        if self.weights.shape != (h,) or self.price_coeffs.shape != (h,):
            raise DomainError("household arrays must share length H")
        if self.utility_base.shape != (h, j):
            raise DomainError("utility_base must have shape (H, J)")
        if (self.weights < 0).any() or self.weights.sum() <= 0:
            raise DomainError("weights must be nonnegative with positive total")
        if not (self.price_coeffs < 0).all():
            raise DomainError("all price coefficients must be < 0")
        if not ((self.s0 > 0) & (self.s0 < 1)).all():
            raise DomainError("observed shares must lie in (0, 1)")
        if not self.s0.sum() < 1.0:
            raise DomainError("observed shares must sum below 1 (outside option)")
        if not (self.p0 > 0).all():
            raise DomainError("observed prices must be positive")
        if not self.price_ceiling > self.p0.max():
            raise DomainError("price_ceiling must exceed every observed price")
        if self.xi is not None and self.xi.shape != (j,):
            raise DomainError("xi must have length J")
        if self.lam is not None:
            if self.lam.shape != (j,):
                raise DomainError("lam must have length J")
            if not (self.lam > 0).all():
                raise DomainError("shadow costs must be positive")
        return self

    def to_json(self) -> str:
        doc = {
            "households": [
                {
                    "weight": float(w),
                    "price_coeff": float(a),
                    "utility_base": [float(x) for x in row],
                }
                for w, a, row in zip(self.weights, self.price_coeffs, self.utility_base)
            ],
            "products": [
                {
                    "xi": None if self.xi is None else float(self.xi[j]),
                    "lambda": None if self.lam is None else float(self.lam[j]),
                }
                for j in range(self.n_products)
            ],
            "p0": [float(x) for x in self.p0],
            "s0": [float(x) for x in self.s0],
            "price_ceiling": float(self.price_ceiling),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LogitMarket":
        doc = json.loads(text)
        hh = doc["households"]
        xi = [p["xi"] for p in doc["products"]]
        lam = [p["lambda"] for p in doc["products"]]
        market = cls(
            weights=np.array([h["weight"] for h in hh], dtype=float),
            price_coeffs=np.array([h["price_coeff"] for h in hh], dtype=float),
            utility_base=np.array([h["utility_base"] for h in hh], dtype=float),
            p0=np.array(doc["p0"], dtype=float),
            s0=np.array(doc["s0"], dtype=float),
            price_ceiling=float(doc["price_ceiling"]),
            xi=None if any(x is None for x in xi) else np.array(xi, dtype=float),
            lam=None if any(x is None for x in lam) else np.array(lam, dtype=float),
        )
        return market.validate()


@dataclass
class NaiveLogitFit:
    """Own-price binary-logit fit of log-odds on price."""

    eta: float
    theta: float
    n_clamped: int = 0


@dataclass
class CalibratedPipelineResult:
    delta: np.ndarray  # (J,) terminal percentage change vs observed prices
    percentiles: tuple  # (p10, p50, p90) of delta across products
    terminal_prices: np.ndarray
    n_clamped: int
    checkpoints: dict  # exploitation horizon -> delta vector at that horizon


def _probs(norm_weights, price_coeffs, utility_base, xi, prices):
    """Household-by-product choice probabilities with per-household
    max-subtraction (outside option utility 0 included in the guard)."""
    util = price_coeffs[:, None] * prices[None, :] + utility_base
    if xi is not None:
        util = util + xi[None, :]
    m = np.maximum(util.max(axis=1), 0.0)
    num = np.exp(util - m[:, None])
    denom = np.exp(-m) + num.sum(axis=1)
    return num / denom[:, None]


def _shares_core(norm_weights, price_coeffs, utility_base, xi, prices):
    return norm_weights @ _probs(norm_weights, price_coeffs, utility_base, xi, prices)


def shares(market: LogitMarket, prices) -> np.ndarray:
    """Predicted market shares at a price vector (outside share implicit)."""
    p = np.asarray(prices, dtype=float)
    if p.shape != (market.n_products,):
        raise ValueError(f"prices must have shape ({market.n_products},)")
    if (p < 0).any():
        raise ValueError("prices must be nonnegative")
    return _shares_core(market.norm_weights, market.price_coeffs, market.utility_base,
                        market.xi, p)


def share_price_derivatives(market: LogitMarket, prices) -> np.ndarray:
    """Own-price share derivatives d s_j / d p_j for every product."""
    p = np.asarray(prices, dtype=float)
    pi = _probs(market.norm_weights, market.price_coeffs, market.utility_base,
                market.xi, p)
    w_alpha = market.norm_weights * market.price_coeffs
    return w_alpha @ (pi * (1.0 - pi))


def share_own_derivative(market: LogitMarket, prices, j: int) -> float:
    """d s_j / d p_j; strictly negative."""
    if not 0 <= j < market.n_products:
        raise IndexError(f"product index {j} outside 0..{market.n_products - 1}")
    return float(share_price_derivatives(market, prices)[j])


def calibrate_xi(market: LogitMarket, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """Fixed effects matching observed shares at observed prices.

    Log-share fixed-point iteration xi <- xi + log(s0) - log(s(p0; xi));
    the outside option pins the level, so no further normalization is
    needed. Stops when max_j |s_j - s0_j| < tol.
    """
    market.validate()
    xi = np.zeros(market.n_products) if market.xi is None else market.xi.copy()
    log_s0 = np.log(market.s0)
    for _ in range(max_iter):
        s = _shares_core(market.norm_weights, market.price_coeffs, market.utility_base,
                         xi, market.p0)
        if np.abs(s - market.s0).max() < tol:
            return xi
        xi = xi + log_s0 - np.log(s)
    resid = float(np.abs(s - market.s0).max())
    raise NotConverged(f"share inversion residual {resid:.3g} after {max_iter} iterations",
                       last=xi)


def calibrate_lambda(market: LogitMarket) -> np.ndarray:
    """Shadow costs making observed prices satisfy the Nash first-order
    conditions: lam_j = p0_j + s0_j / (d s_j / d p_j at p0)."""
    if market.xi is None:
        raise CalibrationError("calibrate xi before lambda")
    deriv = share_price_derivatives(market, market.p0)
    lam = market.p0 + market.s0 / deriv
    if not (lam > 0).all():
        worst = int(np.argmin(lam))
        raise CalibrationError(
            f"shadow cost for product {worst} is {lam[worst]:.4g} <= 0: "
            "demand too inelastic at observed prices"
        )
    assert (lam < market.p0).all()
    return lam


def calibrated(market: LogitMarket, tol: float = 1e-10, max_iter: int = 1000) -> LogitMarket:
    """Convenience: calibrate xi then lambda, returning the updated market."""
    xi = calibrate_xi(market, tol=tol, max_iter=max_iter)
    with_xi = replace(market, xi=xi)
    lam = calibrate_lambda(with_xi)
    return replace(with_xi, lam=lam).validate()


def _maximize_scalar(f, lo: float, hi: float, coarse: int = 33, tol: float = 1e-11,
                     dfunc=None) -> float:
    """Deterministic 1-d maximizer: coarse grid bracket, then golden section.

    Value comparisons alone bottom out near sqrt(eps / curvature); when the
    analytic derivative ``dfunc`` is supplied, a sign bisection on it
    polishes the interior optimum to ``tol``.
    """
    xs = np.linspace(lo, hi, coarse)
    vals = [f(x) for x in xs]
    k = int(np.argmax(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, coarse - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    golden_tol = max(tol, 1e-5) if dfunc is not None else tol
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = f(c1), f(c2)
    while b - a > golden_tol:
        if f1 >= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = f(c2)
    if dfunc is None:
        return 0.5 * (a + b)
    # widen minimally so the derivative brackets the root, then bisect
    da, db = dfunc(a), dfunc(b)
    if da < 0.0 and a <= lo + golden_tol:
        return float(lo) if dfunc(lo) <= 0.0 else 0.5 * (a + b)
    if db > 0.0 and b >= hi - golden_tol:
        return float(hi) if dfunc(hi) >= 0.0 else 0.5 * (a + b)
    if da < 0.0 or db > 0.0:
        return 0.5 * (a + b)
    while b - a > tol:
        mid = 0.5 * (a + b)
        if dfunc(mid) >= 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _sweep_state(market: LogitMarket, prices: np.ndarray):
    """Shifted exponentiated utilities and denominators at a price vector."""
    util = market.price_coeffs[:, None] * prices[None, :] + market.utility_base
    if market.xi is not None:
        util = util + market.xi[None, :]
    m = np.maximum(util.max(axis=1), 0.0)
    e = np.exp(util - m[:, None])
    d = np.exp(-m) + e.sum(axis=1)
    return m, e, d


def nash_solve(market: LogitMarket, start=None, tol: float = 1e-9,
               max_iter: int = 500) -> np.ndarray:
    """Synchronous iterated best responses to a fixed point.

    Each product maximizes (p - lam_j) s_j holding rivals at the current
    iterate; a calibrated market started at p0 stays at p0.
    """
    if market.lam is None:
        raise CalibrationError("nash_solve needs a calibrated market")
    wn = market.norm_weights
    p = market.p0.copy() if start is None else np.asarray(start, dtype=float).copy()
    for _ in range(max_iter):
        m, e, d = _sweep_state(market, p)
        new = np.empty_like(p)
        for j in range(market.n_products):
            rest = d - e[:, j]
            base_j = market.utility_base[:, j] + (0.0 if market.xi is None else market.xi[j])
            coef = np.exp(base_j - m)
            alpha = market.price_coeffs
            lam_j = market.lam[j]

            def profit(q):
                ej = coef * np.exp(alpha * q)
                return (q - lam_j) * float(wn @ (ej / (rest + ej)))

            def dprofit(q):
                ej = coef * np.exp(alpha * q)
                frac = ej / (rest + ej)
                own = float(wn @ frac)
                slope = float(wn @ (alpha * frac * (1.0 - frac)))
                return own + (q - lam_j) * slope

            new[j] = _maximize_scalar(profit, 0.0, market.price_ceiling, tol=1e-12,
                                      dfunc=dprofit)
        delta = float(np.abs(new - p).max())
        p = new
        if delta < tol:
            return p
    raise NotConverged(f"best-response iteration residual {delta:.3g}", last=p)


def monopoly_solve(market: LogitMarket, start=None, tol: float = 1e-9,
                   max_iter: int = 500) -> np.ndarray:
    """Coordinate ascent on total profit sum_j (p_j - lam_j) s_j(P).

    Line searches are exact 1-d maximizations with household-level
    incremental denominators. Returns prices dominating the Nash vector
    componentwise (substitution is internalized).
    """
    if market.lam is None:
        raise CalibrationError("monopoly_solve needs a calibrated market")
    wn = market.norm_weights
    p = market.p0.copy() if start is None else np.asarray(start, dtype=float).copy()
    m, e, d = _sweep_state(market, p)
    margins = p - market.lam
    a_h = e @ margins  # per-household sum_k (p_k - lam_k) e_hk
    for _ in range(max_iter):
        biggest = 0.0
        for j in range(market.n_products):
            rest_d = d - e[:, j]
            rest_a = a_h - margins[j] * e[:, j]
            base_j = market.utility_base[:, j] + (0.0 if market.xi is None else market.xi[j])
            coef = np.exp(base_j - m)
            alpha = market.price_coeffs
            lam_j = market.lam[j]

            def total_profit(q):
                ej = coef * np.exp(alpha * q)
                return float(wn @ ((rest_a + (q - lam_j) * ej) / (rest_d + ej)))

            def dtotal_profit(q):
                ej = coef * np.exp(alpha * q)
                dj = rest_d + ej
                aj = rest_a + (q - lam_j) * ej
                dej = alpha * ej
                return float(wn @ (((ej + (q - lam_j) * dej) * dj - aj * dej) / (dj * dj)))

            q_star = _maximize_scalar(total_profit, 0.0, market.price_ceiling, tol=1e-12,
                                      dfunc=dtotal_profit)
            biggest = max(biggest, abs(q_star - p[j]))
            ej = coef * np.exp(alpha * q_star)
            d = rest_d + ej
            a_h = rest_a + (q_star - lam_j) * ej
            e[:, j] = ej
            p[j] = q_star
            margins[j] = q_star - lam_j
        if biggest < tol:
            return p
    raise NotConverged(f"coordinate ascent residual {biggest:.3g}", last=p)


def naive_logit_fit(prices, share_series, floor: float = SHARE_FLOOR) -> NaiveLogitFit:
    """OLS of log(s / (1 - s)) on (1, price).

    Shares outside [floor, 1 - floor] are clamped before the log-odds
    transform; the clamp count is reported on the fit.
    """
    p = np.asarray(prices, dtype=float)
    s = np.asarray(share_series, dtype=float)
    if p.ndim != 1 or p.shape != s.shape:
        raise ValueError("price and share series must be equal-length 1-d arrays")
    if p.size < 2:
        raise ValueError("need at least 2 observations")
    clamped = np.clip(s, floor, 1.0 - floor)
    n_clamped = int((clamped != s).sum())
    y = np.log(clamped / (1.0 - clamped))
    dp = p - p.mean()
    sxx = float(dp @ dp)
    if sxx <= 0.0:
        raise DegenerateHistory("all prices identical: log-odds slope undefined")
    theta = float(dp @ (y - y.mean())) / sxx
    eta = float(y.mean() - theta * p.mean())
    return NaiveLogitFit(eta=eta, theta=theta, n_clamped=n_clamped)


def logit_price_opt(fit: NaiveLogitFit, lam: float, ceiling: float) -> float:
    """argmax over [0, ceiling] of (p - lam) * logistic(eta + theta p).

    Nonnegative slope makes the objective increasing, so the ceiling wins.
    Otherwise the objective is unimodal with its maximum above lam; a
    golden-section pass brackets it and bisection on the profit derivative
    polishes to 1e-12, well inside 1e-10 price resolution.
    """
    if not ceiling > lam:
        raise ValueError("ceiling must exceed the shadow cost")
    if fit.theta >= 0.0:
        return float(ceiling)
    eta, theta = fit.eta, fit.theta

    def dsign(p):
        # sign of d/dp (p - lam) Lambda(eta + theta p), divided by Lambda > 0
        lam_p = 1.0 / (1.0 + math.exp(-(eta + theta * p)))
        return 1.0 + (p - lam) * theta * (1.0 - lam_p)

    if dsign(ceiling) >= 0.0:
        return float(ceiling)

    def gain(p):
        return (p - lam) / (1.0 + math.exp(-(eta + theta * p)))

    lo = _maximize_scalar(gain, 0.0, ceiling, tol=1e-6)
    a = max(0.0, lo - 1e-5)
    b = min(ceiling, lo + 1e-5)
    if dsign(a) < 0.0:
        a = 0.0
    if dsign(b) > 0.0:
        b = ceiling
    while b - a > 1e-12:
        mid = 0.5 * (a + b)
        if dsign(mid) >= 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def run_calibrated_pipeline(
    market: LogitMarket,
    m: float,
    sigma: float,
    sigma_nu: float,
    k_explore: int,
    t_exploit: int,
    seed: int,
    t_checkpoints=None,
    share_noise_sigma: float = 0.0,
) -> CalibratedPipelineResult:
    """Explore-then-exploit pipeline on the calibrated market.

    Exploration means are mu_j = m * p0_j (1 + nu_j) with cross-product
    dispersion nu_j ~ Unif(-sqrt(3) sigma_nu, sqrt(3) sigma_nu); exploration
    prices are mu_j (1 + v), v ~ Normal(0, sigma^2), clipped to
    [0, price_ceiling]. Exploitation fits a naive binary logit per product
    (synchronous updates). Reports Delta_j = 100 (P_terminal / p0_j - 1).

    ``t_checkpoints`` asks for Delta snapshots at intermediate exploitation
    horizons; by construction they equal the terminal Delta of a shorter
    run with the same seed.
    """
    if market.lam is None:
        raise CalibrationError("pipeline needs a calibrated market")
    if k_explore < 2:
        raise DomainError("k_explore must be >= 2")
    jn = market.n_products
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    nu = rng.uniform(-_SQRT3 * sigma_nu, _SQRT3 * sigma_nu, size=jn)
    mu = m * market.p0 * (1.0 + nu)
    noise = rng.normal(0.0, sigma, size=(k_explore, jn)) if sigma > 0 else np.zeros((k_explore, jn))
    expl = np.clip(mu[None, :] * (1.0 + noise), 0.0, market.price_ceiling)

    want = set() if t_checkpoints is None else {int(x) for x in t_checkpoints}
    checkpoints: dict[int, np.ndarray] = {}

    mean_p = np.zeros(jn)
    mean_y = np.zeros(jn)
    m2 = np.zeros(jn)
    cpy = np.zeros(jn)
    n_clamped = 0
    total = k_explore + t_exploit
    cur = np.empty(jn)
    nxt = np.empty(jn)

    for t in range(total):
        cur[:] = expl[t] if t < k_explore else nxt
        s = _shares_core(market.norm_weights, market.price_coeffs, market.utility_base,
                         market.xi, cur)
        if share_noise_sigma > 0.0:
            s = np.clip(s + rng.normal(0.0, share_noise_sigma, size=jn), 0.0, 1.0)
        clamped = np.clip(s, SHARE_FLOOR, 1.0 - SHARE_FLOOR)
        n_clamped += int((clamped != s).sum())
        y = np.log(clamped / (1.0 - clamped))

        nn = t + 1
        d_old = cur - mean_p
        mean_p += d_old / nn
        m2 += d_old * (cur - mean_p)
        dy = y - mean_y
        mean_y += dy / nn
        cpy += d_old * (y - mean_y)

        if k_explore - 1 <= t < total - 1:
            if (m2 <= 0.0).any():
                raise DegenerateHistory("exploration produced zero price variance")
            theta = cpy / m2
            eta = mean_y - theta * mean_p
            for j in range(jn):
                nxt[j] = logit_price_opt(
                    NaiveLogitFit(eta=float(eta[j]), theta=float(theta[j])),
                    float(market.lam[j]),
                    market.price_ceiling,
                )
        horizon = t + 1 - k_explore
        if horizon in want:
            checkpoints[horizon] = 100.0 * (cur / market.p0 - 1.0)

    delta = 100.0 * (cur / market.p0 - 1.0)
    p10, p50, p90 = np.percentile(delta, [10, 50, 90])
    return CalibratedPipelineResult(
        delta=delta,
        percentiles=(float(p10), float(p50), float(p90)),
        terminal_prices=cur.copy(),
        n_clamped=n_clamped,
        checkpoints=checkpoints,
    )


def synth_market(
    n_products: int = 20,
    n_households: int = 30,
    price_scale: float = 1.0,
    alpha_range=(-10.0, -3.0),
    inside_share: float = 0.6,
    seed=None,
    rng=None,
    price_ceiling=None,
    tol: float = 1e-10,
) -> LogitMarket:
    """Generate and calibrate a synthetic market.

    Observed prices get a lognormal-like spread around ``price_scale``;
    observed shares are the xi = 0 model shares rescaled to leave an
    outside share of 1 - inside_share; xi then matches them exactly and
    the shadow costs follow from the first-order conditions.

    The default price-coefficient range is deliberately wide: household
    heterogeneity makes the market-level demand curve convex (its local
    elasticity falls as price rises), which is what income-heterogeneous
    rental demand systems look like.
    """
    if n_products < 1 or n_households < 1:
        raise ValueError("counts must be >= 1")
    if not 0.0 < inside_share < 1.0:
        raise ValueError("inside_share must lie in (0, 1)")
    if rng is None:
        rng = np.random.default_rng(seed)
    alphas = rng.uniform(alpha_range[0], alpha_range[1], size=n_households) / price_scale
    quality = rng.normal(0.0, 0.5, size=n_products)
    base = quality[None, :] + rng.normal(0.0, 0.3, size=(n_households, n_products))
    p0 = price_scale * np.exp(rng.normal(0.0, 0.15, size=n_products))
    weights = rng.uniform(0.5, 1.5, size=n_households)

    wn = weights / weights.sum()
    s_raw = _shares_core(wn, alphas, base, None, p0)
    s0 = s_raw * (inside_share / s_raw.sum())

    market = LogitMarket(
        weights=weights,
        price_coeffs=alphas,
        utility_base=base,
        p0=p0,
        s0=s0,
        price_ceiling=float(price_ceiling) if price_ceiling is not None else 3.0 * float(p0.max()),
    ).validate()
    return calibrated(market, tol=tol)


def write_pipeline_csv(market: LogitMarket, result: CalibratedPipelineResult,
                       csv_path, json_path=None) -> None:
    """Per-product pipeline output plus an optional percentile summary."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["product", "p0", "lambda", "terminal_price", "delta_pct"])
        for j in range(market.n_products):
            w.writerow([j, repr(float(market.p0[j])), repr(float(market.lam[j])),
                        repr(float(result.terminal_prices[j])),
                        repr(float(result.delta[j]))])
    if json_path is not None:
        p10, p50, p90 = result.percentiles
        with open(json_path, "w") as fh:
            json.dump({"delta_p10": p10, "delta_p50": p50, "delta_p90": p90,
                       "n_clamped": result.n_clamped}, fh, indent=2)
