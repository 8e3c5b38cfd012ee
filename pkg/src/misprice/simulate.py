"""Finite-horizon stochastic explore-then-exploit pricing pipeline.

K periods of independent random prices seed each firm's own price/sales
history; for T further periods every firm refits a one-regressor demand
curve to its own history and posts the myopic profit maximizer. Demand
shocks are bounded and conditionally mean zero, with half-width capped
below the worst-case expected demand so realized quantities stay positive.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import DegenerateHistory, DomainError
from .market import MarketParams
from .moments import MomentState

__all__ = [
    "ExplorationSpec",
    "ShockSpec",
    "SimConfig",
    "SimResult",
    "EnsembleStats",
    "run_pipeline",
    "run_ensemble",
]

# Standard deviation of a standard normal truncated to [-3, 3]; used to
# rescale truncated-Gaussian draws so the requested sigma is exact.
_PHI3 = math.exp(-4.5) / math.sqrt(2.0 * math.pi)
_Z3 = math.erf(3.0 / math.sqrt(2.0))
_TRUNC3_STD = math.sqrt(1.0 - 6.0 * _PHI3 / _Z3)
_TRUNC_K = 3.0


@dataclass(frozen=True)
class ExplorationSpec:
    """Cross-firm independent exploration price distribution.

    ``mu`` and ``sigma`` are per-firm means and standard deviations;
    ``shape`` picks the family. Supports are symmetric around the mean
    (uniform on mu +- sqrt(3) sigma, or a Gaussian truncated at 3 scaled
    deviations), so the stated mean/stddev are exact.
    """

    mu: tuple
    sigma: tuple
    shape: str = "uniform"

    @classmethod
    def symmetric(cls, mu: float, sigma: float, n_firms: int, shape: str = "uniform"):
        return cls(mu=(float(mu),) * n_firms, sigma=(float(sigma),) * n_firms, shape=shape)

    def arrays(self):
        return np.asarray(self.mu, dtype=float), np.asarray(self.sigma, dtype=float)

    def support(self):
        """Per-firm (lo, hi) support arrays."""
        mu, sig = self.arrays()
        if self.shape == "uniform":
            half = math.sqrt(3.0) * sig
        elif self.shape == "truncated-gaussian":
            half = _TRUNC_K * (sig / _TRUNC3_STD)
        else:
            raise DomainError(f"unknown exploration shape {self.shape!r}")
        return mu - half, mu + half

    def validate(self, params: MarketParams) -> "ExplorationSpec":
        mu, sig = self.arrays()
        n = params.n_firms
        if mu.shape != (n,) or sig.shape != (n,):
            raise DomainError(f"mu/sigma must have length n_firms={n}")
        if not (sig > 0).all():
            raise DomainError("exploration sigma must be strictly positive")
        lo, hi = self.support()
        if (lo < params.p_min - 1e-12).any() or (hi > params.p_max + 1e-12).any():
            raise DomainError(
                "exploration support must be contained in the price box; "
                f"got [{lo.min()}, {hi.max()}] vs [{params.p_min}, {params.p_max}]"
            )
        return self


@dataclass(frozen=True)
class ShockSpec:
    """Bounded conditionally-mean-zero demand shocks.

    ``sigma_env`` bounds the conditional standard deviation. The half-width
    is additionally capped at 0.99 of the worst-case expected demand
    a - b p_max + c p_min so that realized quantities stay positive.
    """

    sigma_env: float = 0.0
    family: str = "uniform-bounded"

    def validate(self, params: MarketParams) -> "ShockSpec":
        if self.sigma_env < 0:
            raise DomainError("sigma_env must be >= 0")
        if self.family not in ("uniform-bounded", "truncated-gaussian"):
            raise DomainError(f"unknown shock family {self.family!r}")
        return self

    def half_width(self, params: MarketParams) -> float:
        q_lb = params.a - params.b * params.p_max + params.c * params.p_min
        if self.family == "uniform-bounded":
            return min(math.sqrt(3.0) * self.sigma_env, 0.99 * q_lb)
        return min(_TRUNC_K * self.sigma_env, 0.99 * q_lb)


@dataclass(frozen=True)
class SimConfig:
    """Inputs of one stochastic pipeline run."""

    k_explore: int
    t_exploit: int
    exploration: ExplorationSpec
    shock: ShockSpec = field(default_factory=ShockSpec)
    seed: int = 0
    record_full_history: bool = False

    def validate(self, params: MarketParams) -> "SimConfig":
        if not (isinstance(self.k_explore, (int, np.integer)) and self.k_explore >= 2):
            raise DomainError("k_explore must be an integer >= 2 (OLS needs price variance)")
        if not (isinstance(self.t_exploit, (int, np.integer)) and self.t_exploit >= 0):
            raise DomainError("t_exploit must be an integer >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")
        self.exploration.validate(params)
        self.shock.validate(params)
        return self


@dataclass
class SimResult:
    """Terminal prices plus optional full paths and the moment snapshot."""

    terminal_prices: np.ndarray
    terminal_moments: MomentState
    price_history: np.ndarray | None = None
    quantity_history: np.ndarray | None = None

    def to_trace_csv(self, path) -> None:
        """Per-period trace with columns period, firm, price, quantity."""
        if self.price_history is None or self.quantity_history is None:
            raise ValueError("trace dump needs record_full_history=True")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["period", "firm", "price", "quantity"])
            for t in range(self.price_history.shape[0]):
                for i in range(self.price_history.shape[1]):
                    w.writerow([t + 1, i, repr(float(self.price_history[t, i])),
                                repr(float(self.quantity_history[t, i]))])


@dataclass
class EnsembleStats:
    """Order-independent aggregate of terminal prices across runs."""

    terminal: np.ndarray  # (n_runs, n_firms)
    mean: np.ndarray
    std: np.ndarray
    quantiles: dict
    hist_edges: np.ndarray
    hist_counts: np.ndarray  # (n_bins, n_firms)


def _rng_for_run(seed: int, run_index: int) -> np.random.Generator:
    # Structured derivation: the SeedSequence hash of (root seed, run index)
    # makes per-run streams independent of scheduling.
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(run_index)]))


def _draw_exploration(spec: ExplorationSpec, k: int, rng: np.random.Generator) -> np.ndarray:
    mu, sig = spec.arrays()
    n = mu.size
    if spec.shape == "uniform":
        half = math.sqrt(3.0) * sig
        return rng.uniform(mu - half, mu + half, size=(k, n))
    scale = sig / _TRUNC3_STD
    lo, hi = mu - _TRUNC_K * scale, mu + _TRUNC_K * scale
    out = rng.normal(mu, scale, size=(k, n))
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = rng.normal(np.broadcast_to(mu, out.shape)[bad],
                              np.broadcast_to(scale, out.shape)[bad])
        bad = (out < lo) | (out > hi)
    return out


def _draw_shocks(spec: ShockSpec, params: MarketParams, total: int, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    if spec.sigma_env == 0.0:
        return np.zeros((total, n))
    w = spec.half_width(params)
    if spec.family == "uniform-bounded":
        return rng.uniform(-w, w, size=(total, n))
    out = rng.normal(0.0, spec.sigma_env, size=(total, n))
    bad = np.abs(out) > w
    while bad.any():
        out[bad] = rng.normal(0.0, spec.sigma_env, size=int(bad.sum()))
        bad = np.abs(out) > w
    return out


def run_pipeline(params: MarketParams, config: SimConfig, run_index: int = 0) -> SimResult:
    """Run one explore-then-exploit pipeline.

    Periods 1..K draw i.i.d. exploration prices; from period K on, each
    firm refits its own-price OLS over its full history and posts the
    profit-maximizing price for the next period. Quantities realize as
    expected demand plus the drawn shock.
    """
    config.validate(params)
    n = params.n_firms
    k, t = int(config.k_explore), int(config.t_exploit)
    rng = _rng_for_run(config.seed, run_index)
    expl = _draw_exploration(config.exploration, k, rng)
    shocks = _draw_shocks(config.shock, params, k + t, n, rng)

    status, prices, quantities, mean_p, mean_q, m2, c_pq = kernels.pipeline(
        params.a, params.b, params.c, params.p_min, params.p_max, k, t, expl, shocks
    )
    if status != 0:
        raise DegenerateHistory("exploration produced zero price variance")

    total = k + t
    tau = total / k
    moments = MomentState(tau=tau, u=mean_p, v=tau * (m2 / total))
    return SimResult(
        terminal_prices=prices[-1].copy(),
        terminal_moments=moments,
        price_history=prices if config.record_full_history else None,
        quantity_history=quantities if config.record_full_history else None,
    )


def _terminal_for_run(args):
    params, config, idx = args
    try:
        return idx, run_pipeline(params, config, run_index=idx).terminal_prices
    except Exception as exc:  # noqa: BLE001 - re-raised with run index by caller
        raise RuntimeError(f"pipeline run {idx} failed: {exc}") from exc


def run_ensemble(
    params: MarketParams,
    config: SimConfig,
    n_runs: int,
    workers: int = 1,
    hist_bins: int = 40,
) -> EnsembleStats:
    """Independent pipelines with per-run derived seeds.

    Results are merged in run-index order, so the aggregate is bit-identical
    across worker counts.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    config.validate(params)
    jobs = [(params, config, i) for i in range(n_runs)]
    if workers <= 1:
        results = [_terminal_for_run(j) for j in jobs]
    else:
        chunk = max(1, n_runs // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_terminal_for_run, jobs, chunksize=chunk))
    results.sort(key=lambda r: r[0])
    terminal = np.asarray([r[1] for r in results], dtype=float)

    qs = (0.1, 0.25, 0.5, 0.75, 0.9)
    edges = np.linspace(params.p_min, params.p_max, hist_bins + 1)
    counts = np.stack(
        [np.histogram(terminal[:, i], bins=edges)[0] for i in range(params.n_firms)],
        axis=1,
    )
    return EnsembleStats(
        terminal=terminal,
        mean=terminal.mean(axis=0),
        std=terminal.std(axis=0, ddof=1) if n_runs > 1 else np.zeros(params.n_firms),
        quantiles={q: np.quantile(terminal, q, axis=0) for q in qs},
        hist_edges=edges,
        hist_counts=counts,
    )
