"""Deterministic fluid-limit dynamics of the running price moments.

The state is ``(U, V)``: running price means and accumulated price
co-movements. Along scaled time ``tau >= 1``,

    dU/dtau = (P - U) / tau,      dV/dtau = (P - U)(P - U)^T,

where ``P`` is the posted-price map of :func:`misprice.moments.posted_price`.
Integration is classical fixed-step RK4 in log time s = log(tau); the
running-mean drift is O(1) on that clock, which keeps fixed steps stable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import NotConverged, RangeError, StepSizeError
from .market import MarketParams, best_response, capped_monopoly, nash_price
from .moments import MomentState, posted_price_from_arrays

__all__ = [
    "IntegratorConfig",
    "OdeTrajectory",
    "SymmetricTrajectory",
    "LimitResult",
    "ode_rhs",
    "integrate",
    "limit_price",
    "symmetric_reduce",
    "symmetric_limit",
    "cooper_steady_state",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step log-time integration settings.

    ``record_every`` counts integrator steps between stored samples;
    ``None`` picks roughly one sample per 0.01 units of log time.
    """

    log_time_step: float = 1e-3
    tau_end: float = 100.0
    convergence_tol: float = 1e-6
    record_every: int | None = None

    def __post_init__(self):
        if not self.log_time_step > 0:
            raise ValueError("log_time_step must be > 0")
        if not self.tau_end >= 1.0:
            raise ValueError("tau_end must be >= 1")


# Startup ramp of the step schedule: the accumulated covariance relaxes to
# its quasi-stationary scale within a log-time window of order
# sigma_exp^2 / gap^2, which a uniform step would jump over when the
# exploration noise is small. Steps grow geometrically from
# RAMP_FRACTION * h to h, so the local step stays proportional to the
# distance from tau = 1 and the transient is resolved for any noise scale
# down to ~1e-4 price units.
_RAMP_GROWTH = 1.1
_RAMP_FRACTION = 1e-7


def log_mesh(total_s: float, h_max: float, ramp: bool = True) -> np.ndarray:
    """Deterministic log-time step schedule covering ``total_s`` exactly."""
    if total_s <= 0.0:
        return np.empty(0)
    steps = []
    s = 0.0
    if ramp:
        h = h_max * _RAMP_FRACTION
        while h < h_max and s + h < total_s:
            steps.append(h)
            s += h
            h *= _RAMP_GROWTH
    remaining = total_s - s
    n = max(1, math.ceil(remaining / h_max))
    steps.extend([remaining / n] * n)
    return np.asarray(steps, dtype=float)


@dataclass
class OdeTrajectory:
    """Sampled solution: times, moment snapshots, posted prices and gaps."""

    taus: np.ndarray  # (M,)
    u: np.ndarray  # (M, N)
    v: np.ndarray  # (M, N, N)
    p: np.ndarray  # (M, N)

    @property
    def e(self) -> np.ndarray:
        """Price-minus-mean gap P(tau) - U(tau) at every sample."""
        return self.p - self.u

    def state(self, k: int) -> MomentState:
        return MomentState(tau=float(self.taus[k]), u=self.u[k].copy(), v=self.v[k].copy())

    @property
    def terminal_state(self) -> MomentState:
        return self.state(len(self.taus) - 1)

    @property
    def terminal_price(self) -> np.ndarray:
        return self.p[-1].copy()

    def to_csv(self, path, v_path=None) -> None:
        """Dump `tau, firm, U, P, e` rows; optionally V entries alongside."""
        n = self.u.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "firm", "U", "P", "e"])
            for k, tau in enumerate(self.taus):
                for i in range(n):
                    w.writerow([repr(float(tau)), i, repr(float(self.u[k, i])),
                                repr(float(self.p[k, i])),
                                repr(float(self.p[k, i] - self.u[k, i]))])
        if v_path is not None:
            with open(v_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["tau", "i", "j", "V"])
                for k, tau in enumerate(self.taus):
                    for i in range(n):
                        for j in range(n):
                            w.writerow([repr(float(tau)), i, j, repr(float(self.v[k, i, j]))])


@dataclass
class SymmetricTrajectory:
    """Scalar trajectory of the exchangeable symmetric reduction."""

    taus: np.ndarray
    u: np.ndarray
    v: np.ndarray  # own variance, equals c_cross + sigma^2 identically
    c_cross: np.ndarray
    p: np.ndarray


@dataclass
class LimitResult:
    prices: np.ndarray
    converged: bool
    tau: float
    state: MomentState


def ode_rhs(params: MarketParams, state: MomentState):
    """Time-tau derivatives (dU, dV) of the moment dynamics at a state."""
    p = posted_price_from_arrays(params, state.u, state.v)
    e = p - np.asarray(state.u, dtype=float)
    return e / state.tau, np.outer(e, e)


def _initial_v(params: MarketParams, sigma, v_init) -> np.ndarray:
    n = params.n_firms
    if v_init is not None:
        v0 = np.array(v_init, dtype=float)
        if v0.shape != (n, n):
            raise ValueError(f"v_init must have shape ({n}, {n})")
        if not np.allclose(v0, v0.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(v0).max()))):
            raise ValueError("v_init must be symmetric")
        if not (np.diag(v0) > 0).all():
            raise ValueError("v_init must have a strictly positive diagonal")
        return v0
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,)).copy()
    if not (sig > 0).all():
        raise ValueError("sigma must be strictly positive")
    return np.diag(sig**2)


def _check_mu(params: MarketParams, mu) -> np.ndarray:
    u0 = np.asarray(mu, dtype=float)
    if u0.shape != (params.n_firms,):
        raise ValueError(f"mu must have shape ({params.n_firms},), got {u0.shape}")
    if (u0 < params.p_min - 1e-12).any() or (u0 > params.p_max + 1e-12).any():
        raise ValueError("mu must lie inside the price box")
    return u0


def integrate(
    params: MarketParams,
    mu,
    sigma=None,
    config: IntegratorConfig | None = None,
    *,
    v_init=None,
) -> OdeTrajectory:
    """Integrate the moment dynamics from tau=1 to ``config.tau_end``.

    The initial state is U = mu and V = diag(sigma**2) unless a full
    ``v_init`` matrix is supplied (e.g. an equicorrelated steady state).
    Raises StepSizeError if the state turns non-finite.
    """
    cfg = config or IntegratorConfig()
    u0 = _check_mu(params, mu)
    v0 = _initial_v(params, sigma, v_init)

    mesh = log_mesh(math.log(cfg.tau_end), cfg.log_time_step)
    record_every = cfg.record_every or max(1, round(0.01 / cfg.log_time_step))

    taus, us, vs, ps = kernels.ode_run(
        params.a, params.b, params.c, params.p_min, params.p_max,
        u0, v0, 1.0, mesh, record_every,
    )
    if not np.isfinite(us).all() or not np.isfinite(vs).all():
        raise StepSizeError("non-finite state encountered during integration")
    return OdeTrajectory(taus=taus, u=us, v=vs, p=ps)


def limit_price(
    params: MarketParams,
    mu,
    sigma=None,
    tol: float = 1e-6,
    *,
    v_init=None,
    log_time_step: float = 1e-3,
    tau_ceiling: float = 1e8,
    strict: bool = True,
) -> LimitResult:
    """Long-run posted prices, detected decade-by-decade.

    Convergence requires both max_i |P_i - U_i| < tol and the posted price
    moving less than tol across a full decade of tau (the natural clock of
    the dynamics is logarithmic). With ``strict`` a ceiling hit raises
    NotConverged carrying the last state.
    """
    u = _check_mu(params, mu)
    v = _initial_v(params, sigma, v_init)
    first_mesh = log_mesh(math.log(10.0), log_time_step, ramp=True)
    later_mesh = log_mesh(math.log(10.0), log_time_step, ramp=False)

    tau = 1.0
    p_prev = posted_price_from_arrays(params, u, v)
    converged = False
    while tau < tau_ceiling * (1.0 - 1e-12):
        mesh = first_mesh if tau == 1.0 else later_mesh
        taus, us, vs, ps = kernels.ode_run(
            params.a, params.b, params.c, params.p_min, params.p_max,
            u, v, tau, mesh, len(mesh),
        )
        u, v, tau = us[-1], vs[-1], float(taus[-1])
        if not np.isfinite(u).all() or not np.isfinite(v).all():
            raise StepSizeError("non-finite state encountered during integration")
        p_now = ps[-1]
        e_now = p_now - u
        if np.abs(e_now).max() < tol and np.abs(p_now - p_prev).max() < tol:
            converged = True
            break
        p_prev = p_now

    state = MomentState(tau=tau, u=np.asarray(u), v=np.asarray(v))
    result = LimitResult(
        prices=posted_price_from_arrays(params, state.u, state.v),
        converged=converged,
        tau=tau,
        state=state,
    )
    if strict and not converged:
        raise NotConverged(
            f"no price limit detected by tau={tau:.3g} at tol={tol}", last=result
        )
    return result


def symmetric_reduce(
    params: MarketParams,
    s: float,
    sigma: float,
    config: IntegratorConfig | None = None,
) -> SymmetricTrajectory:
    """Scalar dynamics for a symmetric start U = s*1, V = sigma^2 I.

    Tracks the common running mean u, the common accumulated cross
    covariance C and the common posted price p; the own variance is
    v = C + sigma^2 as an exact algebraic identity, so only (u, C) are
    integrated.
    """
    cfg = config or IntegratorConfig()
    if not params.p_min - 1e-12 <= s <= params.p_max + 1e-12:
        raise ValueError("s must lie inside the price box")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")

    mesh = log_mesh(math.log(cfg.tau_end), cfg.log_time_step)
    record_every = cfg.record_every or max(1, round(0.01 / cfg.log_time_step))

    taus, us, cs, ps = kernels.symmetric_run(
        params.a, params.b, params.c, params.p_min, params.p_max,
        float(s), float(sigma), mesh, record_every,
    )
    return SymmetricTrajectory(taus=taus, u=us, v=cs + sigma**2, c_cross=cs, p=ps)


def symmetric_limit(params: MarketParams, s: float) -> float:
    """Zero-noise long-horizon price under symmetric exploration at level s.

    Piecewise: the level s itself when s lies between the Nash price and
    the capped monopoly price, and the capped monopoly price otherwise.
    """
    if not params.p_min - 1e-12 <= s <= params.p_max + 1e-12:
        raise ValueError("s must lie inside the price box")
    lo = nash_price(params)
    hi = capped_monopoly(params)
    if lo <= s <= hi:
        return float(s)
    return hi


def cooper_steady_state(params: MarketParams, p_star: float, sigma: float = 0.05):
    """Equicorrelated initial moments that freeze the dynamics at ``p_star``.

    Returns (mu, v_init) with mu = p_star * 1 and V carrying diagonal
    sigma^2 and off-diagonal rho * sigma^2 where
    rho = (2b - c)(p_star - p_nash) / (c * p_star). Admissible targets are
    p_star in [a(N-1)/((N-1)(2b-c) + c), capped monopoly], which is exactly
    where rho lies in [-1/(N-1), 1].
    """
    n = params.n_firms
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    a, b, c = params.a, params.b, params.c
    p_lo = a * (n - 1) / ((n - 1) * (2.0 * b - c) + c)
    p_hi = capped_monopoly(params)
    eps = 1e-12 * max(1.0, abs(p_star))
    if not (p_lo - eps <= p_star <= p_hi + eps):
        raise RangeError(
            f"p_star={p_star} outside the admissible interval [{p_lo}, {p_hi}]"
        )
    if not (params.p_min - eps <= p_star <= params.p_max + eps):
        raise RangeError(f"p_star={p_star} outside the price box")
    rho = (2.0 * b - c) * (p_star - nash_price(params)) / (c * p_star)
    rho = min(max(rho, -1.0 / (n - 1)), 1.0)
    v = np.full((n, n), rho * sigma**2)
    np.fill_diagonal(v, sigma**2)
    mu = np.full(n, float(p_star))
    return mu, v
