"""Parameter-sweep experiments behind the command-line interface.

Each experiment expands a config document into an ordered list of cells,
runs the cells (optionally on a process pool) and assembles CSV rows in
cell order, so output files are byte-identical for any worker count. A
failing cell becomes a row with the ``error`` column set; it never
silently disappears.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import cones, logit, ode
from .backend import kernels
from .errors import MispriceError
from .market import MarketParams, nash_price
from .moments import posted_price_from_arrays
from .simulate import ExplorationSpec, ShockSpec, SimConfig, run_ensemble

__all__ = ["EXPERIMENT_KINDS", "COLUMNS", "run_experiment", "ConfigError"]

EXPERIMENT_KINDS = (
    "ode-heatmap",
    "stoch-heatmap",
    "histogram",
    "symmetric-curve",
    "cone-prob",
    "interval-sweep",
    "center-sweep",
    "logit-sweep",
    "logit-time",
)
_KIND_IDS = {kind: i + 1 for i, kind in enumerate(EXPERIMENT_KINDS)}

COLUMNS = {
    "ode-heatmap": ["mu1", "mu2", "tau", "sigma_exp", "terminal_price_firm1", "error"],
    "stoch-heatmap": ["mu1", "mu2", "K", "n_runs", "mean_terminal", "std_terminal", "error"],
    "histogram": ["mu1", "mu2", "K", "tau", "n_runs", "bin_left", "bin_right", "count", "error"],
    "symmetric-curve": ["s", "sigma_exp", "terminal_price", "closed_form", "error"],
    "cone-prob": ["n_firms", "r", "bound", "mc_estimate", "mc_se", "n_samples", "error"],
    "interval-sweep": ["ell", "u", "n_firms", "sigma_exp", "tau", "n_draws",
                       "mean_terminal_price", "error"],
    "center-sweep": ["s", "nu", "sigma_exp", "n_firms", "tau", "n_draws",
                     "mean_terminal_price", "truncated", "error"],
    "logit-sweep": ["m", "sigma", "sigma_nu", "k_explore", "t_exploit",
                    "delta_p10", "delta_p50", "delta_p90", "error"],
    "logit-time": ["k_explore", "m", "t_exploit", "delta_p10", "delta_p50", "delta_p90",
                   "error"],
}


class ConfigError(MispriceError, ValueError):
    """The experiment config document is malformed."""


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _grid_values(spec, lo=None, hi=None) -> list[float]:
    """Expand {'start','stop','step'} or {'values': [...]}; clamp to [lo, hi]."""
    if isinstance(spec, dict) and "values" in spec:
        vals = [float(v) for v in spec["values"]]
    elif isinstance(spec, dict):
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        if step <= 0 or stop < start:
            raise ConfigError("grid needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9))
        vals = [round(start + i * step, 12) for i in range(n + 1)]
    elif isinstance(spec, (list, tuple)):
        vals = [float(v) for v in spec]
    else:
        raise ConfigError(f"cannot interpret grid spec {spec!r}")
    if lo is not None:
        vals = [v for v in vals if lo - 1e-12 <= v]
    if hi is not None:
        vals = [v for v in vals if v <= hi + 1e-12]
    if not vals:
        raise ConfigError("grid is empty after intersecting with the price box")
    return vals


def _cell_seed(root_seed: int, kind: str, index: int) -> int:
    ss = np.random.SeedSequence([int(root_seed), _KIND_IDS[kind], int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _market(cfg: dict) -> MarketParams:
    return MarketParams.from_dict(_require(cfg, "market"))


def _chunked_ode_prices(params: MarketParams, mu, sigma, taus, h_req):
    """Posted prices at each requested tau along one trajectory."""
    u = np.asarray(mu, dtype=float)
    v = np.diag(np.full(params.n_firms, float(sigma) ** 2))
    tau = 1.0
    out = []
    for tau_t in sorted(taus):
        total = math.log(tau_t / tau)
        if total > 1e-12:
            mesh = ode.log_mesh(total, h_req, ramp=(tau == 1.0))
            _, us, vs, ps = kernels.ode_run(
                params.a, params.b, params.c, params.p_min, params.p_max,
                u, v, tau, mesh, len(mesh),
            )
            u, v = us[-1], vs[-1]
            tau = tau_t
            out.append((tau_t, ps[-1]))
        else:
            out.append((tau_t, posted_price_from_arrays(params, u, v)))
    return out


# ---------------------------------------------------------------------------
# cell builders and cell workers, one pair per experiment kind
# ---------------------------------------------------------------------------


def _cells_ode_heatmap(cfg):
    params = _market(cfg)
    grid = _grid_values(_require(cfg, "grid"), params.p_min, params.p_max)
    taus = [float(t) for t in _require(cfg, "taus")]
    sigmas = [float(s) for s in _require(cfg, "sigma_exps")]
    h = float(cfg.get("log_time_step", 1e-3))
    cells = []
    for sig in sigmas:
        for mu1 in grid:
            for mu2 in grid:
                cells.append({"market": params.to_dict(), "mu1": mu1, "mu2": mu2,
                              "sigma_exp": sig, "taus": taus, "h": h})
    return cells


def _run_ode_heatmap(payload):
    params = MarketParams.from_dict(payload["market"])
    base = {"mu1": payload["mu1"], "mu2": payload["mu2"], "sigma_exp": payload["sigma_exp"]}
    try:
        prices = _chunked_ode_prices(
            params, [payload["mu1"], payload["mu2"]], payload["sigma_exp"],
            payload["taus"], payload["h"],
        )
        return [dict(base, tau=tau, terminal_price_firm1=float(p[0]), error="")
                for tau, p in prices]
    except Exception as exc:  # noqa: BLE001 - cell errors become rows
        return [dict(base, tau="", terminal_price_firm1="", error=str(exc))]


def _points_or_grid(cfg, params):
    if "points" in cfg:
        return [(float(p[0]), float(p[1])) for p in cfg["points"]]
    grid = _grid_values(_require(cfg, "grid"), params.p_min, params.p_max)
    return [(m1, m2) for m1 in grid for m2 in grid]


def _cells_stoch_heatmap(cfg):
    params = _market(cfg)
    points = _points_or_grid(cfg, params)
    ks = [int(k) for k in _require(cfg, "k_values")]
    tau = float(_require(cfg, "tau"))
    cells = []
    for k in ks:
        t_exploit = round((tau - 1.0) * k)
        for mu1, mu2 in points:
            cells.append({
                "market": params.to_dict(), "mu1": mu1, "mu2": mu2, "K": k,
                "T": t_exploit, "sigma_exp": float(_require(cfg, "sigma_exp")),
                "shock_sigma": float(_require(cfg, "shock_sigma")),
                "n_runs": int(_require(cfg, "n_runs")),
            })
    return cells


def _run_stoch_heatmap(payload):
    params = MarketParams.from_dict(payload["market"])
    base = {"mu1": payload["mu1"], "mu2": payload["mu2"], "K": payload["K"],
            "n_runs": payload["n_runs"]}
    try:
        config = SimConfig(
            k_explore=payload["K"], t_exploit=payload["T"],
            exploration=ExplorationSpec(
                mu=(payload["mu1"], payload["mu2"]),
                sigma=(payload["sigma_exp"],) * 2),
            shock=ShockSpec(sigma_env=payload["shock_sigma"]),
            seed=payload["seed"],
        )
        stats = run_ensemble(params, config, payload["n_runs"])
        return [dict(base, mean_terminal=float(stats.mean[0]),
                     std_terminal=float(stats.std[0]), error="")]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, mean_terminal="", std_terminal="", error=str(exc))]


def _cells_histogram(cfg):
    params = _market(cfg)
    points = _points_or_grid(cfg, params)
    k = int(_require(cfg, "k_explore"))
    tau = float(_require(cfg, "tau"))
    return [{
        "market": params.to_dict(), "mu1": m1, "mu2": m2, "K": k,
        "T": round((tau - 1.0) * k), "tau": tau,
        "sigma_exp": float(_require(cfg, "sigma_exp")),
        "shock_sigma": float(_require(cfg, "shock_sigma")),
        "n_runs": int(_require(cfg, "n_runs")),
        "bins": int(cfg.get("bins", 40)),
    } for m1, m2 in points]


def _run_histogram(payload):
    params = MarketParams.from_dict(payload["market"])
    base = {"mu1": payload["mu1"], "mu2": payload["mu2"], "K": payload["K"],
            "tau": payload["tau"], "n_runs": payload["n_runs"]}
    try:
        config = SimConfig(
            k_explore=payload["K"], t_exploit=payload["T"],
            exploration=ExplorationSpec(
                mu=(payload["mu1"], payload["mu2"]),
                sigma=(payload["sigma_exp"],) * 2),
            shock=ShockSpec(sigma_env=payload["shock_sigma"]),
            seed=payload["seed"],
        )
        stats = run_ensemble(params, config, payload["n_runs"], hist_bins=payload["bins"])
        edges = stats.hist_edges
        return [dict(base, bin_left=float(edges[i]), bin_right=float(edges[i + 1]),
                     count=int(stats.hist_counts[i, 0]), error="")
                for i in range(len(edges) - 1)]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, bin_left="", bin_right="", count="", error=str(exc))]


def _cells_symmetric_curve(cfg):
    params = _market(cfg)
    svals = _grid_values(_require(cfg, "s_grid"), params.p_min, params.p_max)
    sigmas = [float(s) for s in _require(cfg, "sigma_exps")]
    tau_end = float(cfg.get("tau_end", 1e5))
    h = float(cfg.get("log_time_step", 1e-3))
    return [{"market": params.to_dict(), "s": s, "sigma_exp": sig,
             "tau_end": tau_end, "h": h}
            for sig in sigmas for s in svals]


def _run_symmetric_curve(payload):
    params = MarketParams.from_dict(payload["market"])
    base = {"s": payload["s"], "sigma_exp": payload["sigma_exp"]}
    try:
        traj = ode.symmetric_reduce(
            params, payload["s"], payload["sigma_exp"],
            ode.IntegratorConfig(log_time_step=payload["h"], tau_end=payload["tau_end"]),
        )
        return [dict(base, terminal_price=float(traj.p[-1]),
                     closed_form=float(ode.symmetric_limit(params, payload["s"])), error="")]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, terminal_price="", closed_form="", error=str(exc))]


def _cells_cone_prob(cfg):
    ns = _require(cfg, "n_firms")
    rs = [float(r) for r in _require(cfg, "r_values")]
    n_samples = int(cfg.get("n_samples", 100_000))
    hw = float(cfg.get("band_halfwidth", 0.15))
    cells = []
    for n in ns:
        for r in rs:
            cells.append({"n_firms": n, "r": r, "n_samples": n_samples,
                          "band_halfwidth": hw})
    return cells


def _run_cone_prob(payload):
    n, r = payload["n_firms"], payload["r"]
    base = {"n_firms": n, "r": r, "n_samples": ""}
    try:
        if n == "inf":
            bound = cones.cone_probability_bound_limit(min(r, 1.0 - 1e-12))
            return [dict(base, bound=bound, mc_estimate="", mc_se="", error="")]
        n = int(n)
        bound = cones.cone_probability_bound(n, min(r, 1.0 - 1e-12))
        if r >= 1.0:
            # boundary column: the prior needs c < b, so no MC there
            return [dict(base, n_firms=n, bound=bound, mc_estimate="", mc_se="", error="")]
        params = MarketParams(a=1.0, b=1.0, c=r, n_firms=n)
        nash = nash_price(params)
        hw = min(payload["band_halfwidth"], 0.95 * (params.p_max - nash),
                 0.95 * (nash - params.p_min))
        band = cones.RandomIntervalBand(nash - hw, nash + hw).validate(params)
        rng = np.random.default_rng(np.random.SeedSequence([payload["seed"]]))
        est = cones.cone_probability_mc(params, band, n, payload["n_samples"], rng)
        return [dict(base, n_firms=n, n_samples=est.n_samples, bound=bound,
                     mc_estimate=est.estimate, mc_se=est.se, error="")]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, bound="", mc_estimate="", mc_se="", error=str(exc))]


def _cells_interval_sweep(cfg):
    params = MarketParams.from_dict(
        dict(_require(cfg, "market"), n_firms=int(cfg.get("n_firms", 10))))
    grid = _grid_values(_require(cfg, "boundary_grid"), params.p_min, params.p_max)
    return [{
        "market": params.to_dict(), "ell": ell, "u": u,
        "n_firms": params.n_firms,
        "sigma_exp": float(cfg.get("sigma_exp", 0.10)),
        "tau": float(cfg.get("tau", 100.0)),
        "n_draws": int(cfg.get("n_inner_draws", 20)),
        "h": float(cfg.get("log_time_step", 1e-3)),
    } for ell in grid for u in grid if ell < u]


def _run_interval_sweep(payload):
    base = {"ell": payload["ell"], "u": payload["u"], "n_firms": payload["n_firms"],
            "sigma_exp": payload["sigma_exp"], "tau": payload["tau"],
            "n_draws": payload["n_draws"]}
    try:
        params = MarketParams.from_dict(payload["market"])
        n = payload["n_firms"]
        rng = np.random.default_rng(np.random.SeedSequence([payload["seed"]]))
        means = []
        for _ in range(payload["n_draws"]):
            mu = np.concatenate((
                [payload["ell"], payload["u"]],
                rng.uniform(payload["ell"], payload["u"], size=n - 2),
            ))
            prices = _chunked_ode_prices(params, mu, payload["sigma_exp"],
                                         [payload["tau"]], payload["h"])
            means.append(float(prices[0][1].mean()))
        return [dict(base, mean_terminal_price=float(np.mean(means)), error="")]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, mean_terminal_price="", error=str(exc))]


def _cells_center_sweep(cfg):
    params = MarketParams.from_dict(
        dict(_require(cfg, "market"), n_firms=int(cfg.get("n_firms", 10))))
    svals = _grid_values(_require(cfg, "s_grid"), params.p_min, params.p_max)
    return [{
        "market": params.to_dict(), "s": s, "nu": float(nu), "sigma_exp": float(sig),
        "n_firms": params.n_firms,
        "tau": float(cfg.get("tau", 100.0)),
        "n_draws": int(cfg.get("n_draws", 20)),
        "h": float(cfg.get("log_time_step", 1e-3)),
    } for nu in _require(cfg, "nus") for sig in _require(cfg, "sigma_exps") for s in svals]


def _run_center_sweep(payload):
    base = {"s": payload["s"], "nu": payload["nu"], "sigma_exp": payload["sigma_exp"],
            "n_firms": payload["n_firms"], "tau": payload["tau"],
            "n_draws": payload["n_draws"]}
    try:
        params = MarketParams.from_dict(payload["market"])
        rng = np.random.default_rng(np.random.SeedSequence([payload["seed"]]))
        means = []
        truncated = False
        for _ in range(payload["n_draws"]):
            draw = cones.center_dispersion_sample(params, payload["s"], payload["nu"],
                                                  payload["n_firms"], rng)
            truncated = truncated or draw.truncated
            prices = _chunked_ode_prices(params, draw.values, payload["sigma_exp"],
                                         [payload["tau"]], payload["h"])
            means.append(float(prices[0][1].mean()))
        return [dict(base, mean_terminal_price=float(np.mean(means)),
                     truncated=int(truncated), error="")]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, mean_terminal_price="", truncated="", error=str(exc))]


def _resolve_market_json(cfg, root_seed):
    if "market_file" in cfg:
        with open(cfg["market_file"]) as fh:
            return fh.read()
    synth = dict(cfg.get("synth", {}))
    synth.setdefault("seed", root_seed)
    market = logit.synth_market(**synth)
    return market.to_json()


def _cells_logit_sweep(cfg, root_seed):
    market_json = _resolve_market_json(cfg, root_seed)
    ms = _grid_values(_require(cfg, "m_grid"))
    pairs = cfg.get("noise_pairs")
    if pairs is None:
        pairs = [{"sigma": s, "sigma_nu": v}
                 for s in _require(cfg, "sigmas") for v in _require(cfg, "sigma_nus")]
    k = int(_require(cfg, "k_explore"))
    t = int(_require(cfg, "t_exploit"))
    return [{
        "market_json": market_json, "m": m, "sigma": float(p["sigma"]),
        "sigma_nu": float(p["sigma_nu"]), "k_explore": k, "t_exploit": t,
    } for p in pairs for m in ms]


def _run_logit_sweep(payload):
    base = {"m": payload["m"], "sigma": payload["sigma"], "sigma_nu": payload["sigma_nu"],
            "k_explore": payload["k_explore"], "t_exploit": payload["t_exploit"]}
    try:
        market = logit.LogitMarket.from_json(payload["market_json"])
        res = logit.run_calibrated_pipeline(
            market, payload["m"], payload["sigma"], payload["sigma_nu"],
            payload["k_explore"], payload["t_exploit"], payload["seed"],
        )
        p10, p50, p90 = res.percentiles
        return [dict(base, delta_p10=p10, delta_p50=p50, delta_p90=p90, error="")]
    except Exception as exc:  # noqa: BLE001
        return [dict(base, delta_p10="", delta_p50="", delta_p90="", error=str(exc))]


def _cells_logit_time(cfg, root_seed):
    market_json = _resolve_market_json(cfg, root_seed)
    ts = sorted({int(t) for t in _require(cfg, "t_values")})
    return [{
        "market_json": market_json, "k_explore": int(k), "m": float(m),
        "sigma": float(cfg.get("sigma", 0.05)), "sigma_nu": float(cfg.get("sigma_nu", 0.05)),
        "t_values": ts,
    } for k in _require(cfg, "k_values") for m in _require(cfg, "m_values")]


def _run_logit_time(payload):
    base = {"k_explore": payload["k_explore"], "m": payload["m"]}
    try:
        market = logit.LogitMarket.from_json(payload["market_json"])
        ts = payload["t_values"]
        res = logit.run_calibrated_pipeline(
            market, payload["m"], payload["sigma"], payload["sigma_nu"],
            payload["k_explore"], max(ts), payload["seed"], t_checkpoints=ts,
        )
        rows = []
        for t in ts:
            delta = res.checkpoints[t]
            p10, p50, p90 = np.percentile(delta, [10, 50, 90])
            rows.append(dict(base, t_exploit=t, delta_p10=float(p10),
                             delta_p50=float(p50), delta_p90=float(p90), error=""))
        return rows
    except Exception as exc:  # noqa: BLE001
        return [dict(base, t_exploit="", delta_p10="", delta_p50="", delta_p90="",
                     error=str(exc))]


_BUILDERS = {
    "ode-heatmap": lambda cfg, seed: _cells_ode_heatmap(cfg),
    "stoch-heatmap": lambda cfg, seed: _cells_stoch_heatmap(cfg),
    "histogram": lambda cfg, seed: _cells_histogram(cfg),
    "symmetric-curve": lambda cfg, seed: _cells_symmetric_curve(cfg),
    "cone-prob": lambda cfg, seed: _cells_cone_prob(cfg),
    "interval-sweep": lambda cfg, seed: _cells_interval_sweep(cfg),
    "center-sweep": lambda cfg, seed: _cells_center_sweep(cfg),
    "logit-sweep": _cells_logit_sweep,
    "logit-time": _cells_logit_time,
}

_WORKERS = {
    "ode-heatmap": _run_ode_heatmap,
    "stoch-heatmap": _run_stoch_heatmap,
    "histogram": _run_histogram,
    "symmetric-curve": _run_symmetric_curve,
    "cone-prob": _run_cone_prob,
    "interval-sweep": _run_interval_sweep,
    "center-sweep": _run_center_sweep,
    "logit-sweep": _run_logit_sweep,
    "logit-time": _run_logit_time,
}


def _run_one(job):
    kind, payload = job
    return _WORKERS[kind](payload)


def run_experiment(kind: str, cfg: dict, seed: int, workers: int = 1):
    """Expand, run and order an experiment; returns (columns, rows).

    Every cell receives a seed derived from (root seed, experiment id,
    cell index); rows keep cell order regardless of worker count.
    """
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    cells = _BUILDERS[kind](cfg, seed)
    for idx, cell in enumerate(cells):
        cell["seed"] = _cell_seed(seed, kind, idx)
    jobs = [(kind, cell) for cell in cells]
    if workers <= 1:
        nested = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (workers * 4))))
    rows = [row for group in nested for row in group]
    return COLUMNS[kind], rows
