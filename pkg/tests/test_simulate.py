import csv

import numpy as np
import pytest

from misprice.backend import kernels
from misprice.errors import DegenerateHistory, DomainError
from misprice.market import MarketParams
from misprice.moments import ols_from_history, price_from_ols
from misprice.simulate import (
    EnsembleStats,
    ExplorationSpec,
    ShockSpec,
    SimConfig,
    run_ensemble,
    run_pipeline,
)

CANON = MarketParams(a=1.0, b=1.0, c=0.5, n_firms=2, p_min=0.1, p_max=1.0)


def make_config(mu=(0.7, 0.75), sigma=0.05, shock=0.05, k=50, t=100, seed=11, **kw):
    return SimConfig(
        k_explore=k,
        t_exploit=t,
        exploration=ExplorationSpec(mu=mu, sigma=(sigma,) * len(mu)),
        shock=ShockSpec(sigma_env=shock),
        seed=seed,
        **kw,
    )


class TestValidation:
    def test_support_must_fit_the_box(self):
        with pytest.raises(DomainError, match="support"):
            make_config(mu=(0.95, 0.95), sigma=0.05).validate(CANON)
        with pytest.raises(DomainError, match="support"):
            make_config(mu=(0.12, 0.5), sigma=0.05).validate(CANON)

    def test_k_explore_minimum(self):
        with pytest.raises(DomainError, match="k_explore"):
            make_config(k=1).validate(CANON)

    def test_exploration_sigma_positive(self):
        with pytest.raises(DomainError, match="sigma"):
            SimConfig(
                k_explore=5, t_exploit=0,
                exploration=ExplorationSpec(mu=(0.7, 0.7), sigma=(0.05, 0.0)),
                seed=1,
            ).validate(CANON)

    def test_shock_half_width_capped_by_demand_floor(self):
        # worst-case expected demand is a - b p_max + c p_min = 0.05 here
        spec = ShockSpec(sigma_env=0.05)
        assert spec.half_width(CANON) == pytest.approx(0.99 * 0.05)
        roomy = MarketParams(a=1.0, b=1.0, c=0.5, n_firms=2, p_min=0.2, p_max=1.0)
        assert spec.half_width(roomy) == pytest.approx(np.sqrt(3) * 0.05)

    def test_exploration_moments_are_exact(self):
        rng = np.random.default_rng(0)
        for shape in ("uniform", "truncated-gaussian"):
            spec = ExplorationSpec(mu=(0.6, 0.7), sigma=(0.04, 0.02), shape=shape)
            spec.validate(CANON)
            from misprice.simulate import _draw_exploration

            draws = _draw_exploration(spec, 200_000, rng)
            assert draws.mean(axis=0) == pytest.approx([0.6, 0.7], abs=3e-4)
            assert draws.std(axis=0) == pytest.approx([0.04, 0.02], rel=0.01)
            lo, hi = spec.support()
            assert (draws >= lo - 1e-12).all() and (draws <= hi + 1e-12).all()


class TestPipeline:
    def test_t_zero_terminal_is_last_draw(self):
        cfg = make_config(t=0, k=5, record_full_history=True)
        res = run_pipeline(CANON, cfg)
        assert np.array_equal(res.terminal_prices, res.price_history[-1])
        assert res.price_history.shape == (5, 2)

    def test_deterministic_replay_equivalence(self):
        # with shocks off, the first exploitation price must equal the
        # externally recomputed OLS price on the same recorded history
        cfg = make_config(shock=0.0, k=20, t=5, record_full_history=True)
        res = run_pipeline(CANON, cfg)
        p_hist, q_hist = res.price_history, res.quantity_history
        for i in range(2):
            fit = ols_from_history(p_hist[:20, i], q_hist[:20, i])
            want = price_from_ols(fit, q_hist[:20, i].mean(), (CANON.p_min, CANON.p_max))
            assert p_hist[20, i] == pytest.approx(want, abs=1e-12)

    def test_quantities_positive_prices_in_box(self):
        cfg = make_config(k=100, t=400, record_full_history=True, seed=3)
        res = run_pipeline(CANON, cfg)
        assert (res.quantity_history > 0).all()
        assert (res.price_history >= CANON.p_min - 1e-12).all()
        assert (res.price_history <= CANON.p_max + 1e-12).all()

    def test_permutation_equivariance_symmetric_histories(self):
        # identical deterministic histories across firms, shocks off:
        # every exploitation price must be common across firms
        rng = np.random.default_rng(5)
        col = rng.uniform(0.6, 0.8, 30)
        expl = np.column_stack([col, col])
        shocks = np.zeros((60, 2))
        status, prices, *_ = kernels.pipeline(
            CANON.a, CANON.b, CANON.c, CANON.p_min, CANON.p_max, 30, 30, expl, shocks
        )
        assert status == 0
        assert prices[:, 0] == pytest.approx(prices[:, 1], abs=1e-14)

    def test_degenerate_exploration_raises(self):
        expl = np.full((5, 2), 0.7)
        shocks = np.zeros((10, 2))
        status, *_ = kernels.pipeline(
            CANON.a, CANON.b, CANON.c, CANON.p_min, CANON.p_max, 5, 5, expl, shocks
        )
        assert status == 1
        cfg = make_config(k=5, t=5)
        object.__setattr__(cfg.exploration, "sigma", (0.0, 0.0))
        with pytest.raises((DegenerateHistory, DomainError)):
            run_pipeline(CANON, cfg)

    def test_terminal_moments_match_refit(self):
        cfg = make_config(k=40, t=60, record_full_history=True, seed=9)
        res = run_pipeline(CANON, cfg)
        p_hist = res.price_history
        total = 100
        tau = total / 40
        assert res.terminal_moments.tau == pytest.approx(tau)
        assert res.terminal_moments.u == pytest.approx(p_hist.mean(axis=0), abs=1e-12)
        want_v = tau * np.cov(p_hist.T, bias=True)
        assert res.terminal_moments.v == pytest.approx(want_v, abs=1e-12)
        res.terminal_moments.validate(CANON)

    def test_trace_csv(self, tmp_path):
        cfg = make_config(k=5, t=3, record_full_history=True)
        res = run_pipeline(CANON, cfg)
        out = tmp_path / "trace.csv"
        res.to_trace_csv(out)
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["period", "firm", "price", "quantity"]
        assert len(rows) == 1 + 8 * 2
        cfg2 = make_config(k=5, t=3)
        res2 = run_pipeline(CANON, cfg2)
        with pytest.raises(ValueError):
            res2.to_trace_csv(out)


class TestEnsemble:
    def test_single_run_collapse(self):
        cfg = make_config(k=20, t=30, seed=21)
        stats = run_ensemble(CANON, cfg, 1)
        single = run_pipeline(CANON, cfg, run_index=0)
        assert np.array_equal(stats.terminal[0], single.terminal_prices)
        assert np.array_equal(stats.mean, single.terminal_prices)
        assert stats.std == pytest.approx([0.0, 0.0])

    def test_bit_identical_across_invocations_and_workers(self):
        cfg = make_config(k=20, t=30, seed=77)
        a = run_ensemble(CANON, cfg, 12, workers=1)
        b = run_ensemble(CANON, cfg, 12, workers=1)
        c = run_ensemble(CANON, cfg, 12, workers=4)
        assert a.terminal.tobytes() == b.terminal.tobytes() == c.terminal.tobytes()
        assert a.hist_counts.tobytes() == c.hist_counts.tobytes()

    def test_histogram_and_quantiles_shapes(self):
        cfg = make_config(k=20, t=30, seed=5)
        stats = run_ensemble(CANON, cfg, 40, hist_bins=10)
        assert stats.hist_counts.shape == (10, 2)
        assert stats.hist_counts.sum(axis=0) == pytest.approx([40, 40])
        assert set(stats.quantiles) == {0.1, 0.25, 0.5, 0.75, 0.9}

    def test_run_error_carries_index(self):
        cfg = make_config(k=20, t=30, seed=5)
        bad = SimConfig(
            k_explore=cfg.k_explore, t_exploit=cfg.t_exploit,
            exploration=ExplorationSpec(mu=(0.95, 0.95), sigma=(0.05, 0.05)),
            shock=cfg.shock, seed=5,
        )
        with pytest.raises(DomainError):
            run_ensemble(CANON, bad, 3)


def test_fluid_tracking_improves_with_k():
    # empirical check of the fluid-limit convergence: at fixed tau the
    # larger-K ensemble mean must sit closer to the deterministic value
    from misprice.ode import IntegratorConfig, integrate

    params = MarketParams(a=1.0, b=1.0, c=0.5, n_firms=2, p_min=0.2, p_max=1.0)
    traj = integrate(params, [0.75, 0.85], 0.05, IntegratorConfig(tau_end=6.0))
    devs = {}
    for k in (10, 100):
        cfg = make_config(mu=(0.75, 0.85), k=k, t=5 * k, seed=20240809)
        stats = run_ensemble(params, cfg, 200)
        devs[k] = float(np.abs(stats.mean - traj.p[-1]).mean())
    assert devs[100] < devs[10]
    assert devs[100] < 0.02
