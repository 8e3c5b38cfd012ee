import csv
import json
import math

import numpy as np
import pytest

from misprice.errors import CalibrationError, DegenerateHistory, DomainError
from misprice.logit import (
    LogitMarket,
    NaiveLogitFit,
    calibrate_lambda,
    calibrate_xi,
    calibrated,
    logit_price_opt,
    monopoly_solve,
    naive_logit_fit,
    nash_solve,
    run_calibrated_pipeline,
    share_own_derivative,
    share_price_derivatives,
    shares,
    synth_market,
    write_pipeline_csv,
)


def one_by_one_market(alpha=-1.0, p0=1.0, s0=0.4, base=0.0):
    return LogitMarket(
        weights=np.array([1.0]),
        price_coeffs=np.array([alpha]),
        utility_base=np.array([[base]]),
        p0=np.array([p0]),
        s0=np.array([s0]),
        price_ceiling=5.0 * p0,
    )


@pytest.fixture(scope="module")
def market():
    return synth_market(n_products=20, n_households=30, seed=12345)


class TestShares:
    def test_single_logistic(self):
        mk = one_by_one_market()
        got = shares(LogitMarket(**{**mk.__dict__, "xi": np.array([0.0])}), np.array([0.0]))
        assert got[0] == pytest.approx(0.5, abs=1e-15)

    def test_sum_below_one(self, market):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = market.p0 * rng.uniform(0.5, 2.0, market.n_products)
            s = shares(market, p)
            assert ((s > 0) & (s < 1)).all()
            assert s.sum() < 1.0

    def test_logit_substitution_pattern(self, market):
        p = market.p0.copy()
        s_base = shares(market, p)
        p[3] *= 1.05
        s_new = shares(market, p)
        assert s_new[3] < s_base[3]
        others = np.arange(market.n_products) != 3
        assert (s_new[others] > s_base[others]).all()

    def test_overflow_guarded(self, market):
        # enormous utilities must not overflow thanks to max-subtraction
        mk = LogitMarket(**{**market.__dict__, "utility_base": market.utility_base + 600.0})
        s = shares(mk, market.p0 * 0.0)
        assert np.isfinite(s).all()


class TestDerivatives:
    def test_binary_logit_derivative(self):
        mk = one_by_one_market()
        mk = LogitMarket(**{**mk.__dict__, "xi": calibrate_xi(mk)})
        s = shares(mk, mk.p0)
        got = share_own_derivative(mk, mk.p0, 0)
        assert got == pytest.approx(-1.0 * s[0] * (1 - s[0]), rel=1e-12)

    def test_matches_central_difference(self, market):
        h = 1e-6
        deriv = share_price_derivatives(market, market.p0)
        for j in (0, 7, 19):
            pp, pm = market.p0.copy(), market.p0.copy()
            pp[j] += h
            pm[j] -= h
            fd = (shares(market, pp)[j] - shares(market, pm)[j]) / (2 * h)
            assert deriv[j] == pytest.approx(fd, rel=1e-6)
        assert (deriv < 0).all()

    def test_scales_with_alpha(self):
        mk = calibrated(one_by_one_market(alpha=-2.0, s0=0.3))
        pi = shares(mk, mk.p0)[0]
        assert share_own_derivative(mk, mk.p0, 0) == pytest.approx(-2.0 * pi * (1 - pi), rel=1e-12)


class TestCalibration:
    def test_one_product_closed_form(self):
        mk = one_by_one_market(alpha=-1.5, p0=2.0, s0=0.35, base=0.4)
        xi = calibrate_xi(mk)
        want = math.log(0.35 / 0.65) - (-1.5) * 2.0 - 0.4
        assert xi[0] == pytest.approx(want, abs=1e-9)

    def test_defining_property(self, market):
        assert np.abs(shares(market, market.p0) - market.s0).max() < 1e-10

    def test_convergence_speed(self):
        mk = synth_market(n_products=20, n_households=30, seed=4)
        xi = calibrate_xi(LogitMarket(**{**mk.__dict__, "xi": None, "lam": None}),
                          tol=1e-10, max_iter=500)
        s = shares(LogitMarket(**{**mk.__dict__, "xi": xi}), mk.p0)
        assert np.abs(s - mk.s0).max() < 1e-10

    def test_lambda_closed_form_one_product(self):
        mk = one_by_one_market(alpha=-3.0, p0=1.0, s0=0.2)
        mk = LogitMarket(**{**mk.__dict__, "xi": calibrate_xi(mk)})
        lam = calibrate_lambda(mk)
        assert lam[0] == pytest.approx(1.0 + 1.0 / (-3.0 * (1 - 0.2)), rel=1e-9)

    def test_foc_residual(self, market):
        deriv = share_price_derivatives(market, market.p0)
        foc = market.s0 + (market.p0 - market.lam) * deriv
        assert np.abs(foc).max() < 1e-8

    def test_markup_plausibility_band(self, market):
        ratios = market.lam / market.p0
        q25, q75 = np.percentile(ratios, [25, 75])
        assert 0.6 < q25 < q75 < 0.95

    def test_infeasible_costs_raise(self):
        # alpha p0 ~ -0.5: demand far too inelastic at p0
        mk = one_by_one_market(alpha=-0.5, p0=1.0, s0=0.4)
        mk = LogitMarket(**{**mk.__dict__, "xi": calibrate_xi(mk)})
        with pytest.raises(CalibrationError):
            calibrate_lambda(mk)


class TestSolvers:
    def test_calibrated_fixed_point(self, market):
        assert np.abs(nash_solve(market) - market.p0).max() < 1e-8

    def test_perturbed_start_returns(self, market):
        got = nash_solve(market, start=market.p0 * 1.1)
        assert np.abs(got - market.p0).max() < 1e-5

    def test_single_product_nash_equals_monopoly(self):
        mk = calibrated(one_by_one_market(alpha=-3.0, s0=0.2))
        pn = nash_solve(mk)
        pm = monopoly_solve(mk)
        assert pm == pytest.approx(pn, abs=1e-7)

    def test_two_symmetric_products_monopoly_dominates(self):
        mk = LogitMarket(
            weights=np.array([1.0]),
            price_coeffs=np.array([-4.0]),
            utility_base=np.zeros((1, 2)),
            p0=np.array([1.0, 1.0]),
            s0=np.array([0.25, 0.25]),
            price_ceiling=5.0,
        )
        mk = calibrated(mk)
        pn = nash_solve(mk)
        pm = monopoly_solve(mk)
        assert (pm > pn + 1e-6).all()

    def test_monopoly_dominates_and_plausible(self, market):
        pn = nash_solve(market)
        pm = monopoly_solve(market)
        assert (pm >= pn - 1e-8).all()
        q25, q75 = np.percentile(pm / market.p0, [25, 75])
        assert 1.1 < q25 < q75 < 1.5


class TestNaiveFit:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0.5, 2.0, 40)
        eta, theta = 1.3, -2.1
        s = 1.0 / (1.0 + np.exp(-(eta + theta * p)))
        fit = naive_logit_fit(p, s)
        assert fit.eta == pytest.approx(eta, abs=1e-10)
        assert fit.theta == pytest.approx(theta, abs=1e-10)
        assert fit.n_clamped == 0

    def test_constant_shares_zero_slope(self):
        fit = naive_logit_fit([1.0, 2.0, 3.0], [0.3, 0.3, 0.3])
        assert fit.theta == pytest.approx(0.0, abs=1e-14)

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0.5, 2.0, 30)
        s = np.clip(0.4 - 0.1 * p + rng.normal(0, 0.02, 30), 0.01, 0.99)
        a = naive_logit_fit(p, s)
        perm = rng.permutation(30)
        b = naive_logit_fit(p[perm], s[perm])
        assert b.eta == pytest.approx(a.eta, abs=1e-12)
        assert b.theta == pytest.approx(a.theta, abs=1e-12)

    def test_clamp_counted(self):
        fit = naive_logit_fit([1.0, 2.0], [0.0, 0.5])
        assert fit.n_clamped == 1
        assert np.isfinite(fit.eta) and np.isfinite(fit.theta)

    def test_degenerate_prices(self):
        with pytest.raises(DegenerateHistory):
            naive_logit_fit([1.0, 1.0], [0.3, 0.4])


class TestPriceOpt:
    def grid_opt(self, fit, lam, ceiling, step=1e-6):
        p = np.arange(0.0, ceiling + step / 2, step)
        vals = (p - lam) / (1.0 + np.exp(-(fit.eta + fit.theta * p)))
        return float(p[np.argmax(vals)])

    def test_flat_slope_returns_ceiling(self):
        assert logit_price_opt(NaiveLogitFit(0.3, 0.0), 1.0, 4.0) == 4.0
        assert logit_price_opt(NaiveLogitFit(0.3, 0.5), 1.0, 4.0) == 4.0

    def test_interior_optimum_satisfies_foc(self):
        fit = NaiveLogitFit(2.0, -2.5)
        lam = 0.8
        p = logit_price_opt(fit, lam, 5.0)
        lam_p = 1.0 / (1.0 + math.exp(-(fit.eta + fit.theta * p)))
        resid = lam_p + (p - lam) * fit.theta * lam_p * (1 - lam_p)
        assert abs(resid) < 1e-8
        assert p == pytest.approx(self.grid_opt(fit, lam, 5.0), abs=2e-6)

    def test_boundary_cases_match_grid(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            fit = NaiveLogitFit(rng.uniform(-3, 3), rng.uniform(-4, -0.1))
            lam = rng.uniform(0.1, 2.0)
            ceiling = lam + rng.uniform(0.5, 4.0)
            got = logit_price_opt(fit, lam, ceiling)
            want = self.grid_opt(fit, lam, ceiling)
            assert got == pytest.approx(want, abs=2e-6)

    def test_ceiling_must_exceed_cost(self):
        with pytest.raises(ValueError):
            logit_price_opt(NaiveLogitFit(0.0, -1.0), 2.0, 1.5)


class TestPipeline:
    def test_determinism(self, market):
        r1 = run_calibrated_pipeline(market, 0.9, 0.02, 0.02, 20, 50, seed=7)
        r2 = run_calibrated_pipeline(market, 0.9, 0.02, 0.02, 20, 50, seed=7)
        assert np.array_equal(r1.delta, r2.delta)

    def test_exploration_at_nash_stays_near_zero(self, market):
        for sig in (0.02, 0.005, 0.002):
            res = run_calibrated_pipeline(market, 1.0, sig, 0.0, 50, 450, seed=2)
            assert abs(res.percentiles[1]) < 0.5

    def test_below_nash_exploration_elevates(self, market):
        res = run_calibrated_pipeline(market, 0.8, 0.02, 0.02, 50, 450, seed=777)
        assert res.percentiles[1] > 0.0

    def test_u_shape(self, market):
        med = {
            m: run_calibrated_pipeline(market, m, 0.02, 0.02, 50, 450, seed=777).percentiles[1]
            for m in (0.8, 1.0, 1.3)
        }
        assert med[0.8] > med[1.0] + 2.0
        assert med[1.3] > med[1.0] + 2.0

    def test_checkpoints_match_shorter_runs(self, market):
        long = run_calibrated_pipeline(market, 0.85, 0.05, 0.05, 10, 60, seed=5,
                                       t_checkpoints=[20, 60])
        short = run_calibrated_pipeline(market, 0.85, 0.05, 0.05, 10, 20, seed=5)
        assert np.array_equal(long.checkpoints[20], short.delta)
        assert np.array_equal(long.checkpoints[60], long.delta)

    def test_prices_within_ceiling(self, market):
        res = run_calibrated_pipeline(market, 1.2, 0.1, 0.1, 20, 80, seed=9)
        assert (res.terminal_prices >= 0).all()
        assert (res.terminal_prices <= market.price_ceiling).all()

    def test_degenerate_without_noise(self, market):
        with pytest.raises(DegenerateHistory):
            run_calibrated_pipeline(market, 1.0, 0.0, 0.0, 20, 10, seed=1)


class TestSynthAndSerialization:
    def test_same_seed_same_market(self):
        a = synth_market(n_products=8, n_households=10, seed=42)
        b = synth_market(n_products=8, n_households=10, seed=42)
        assert np.array_equal(a.p0, b.p0)
        assert np.array_equal(a.xi, b.xi)
        assert np.array_equal(a.lam, b.lam)

    def test_generated_market_invariants(self):
        mk = synth_market(n_products=12, n_households=15, seed=3)
        mk.validate()
        assert mk.s0.sum() < 1
        assert (mk.lam > 0).all() and (mk.lam < mk.p0).all()
        assert mk.price_ceiling == pytest.approx(3.0 * mk.p0.max())

    def test_nash_returns_p0(self):
        mk = synth_market(n_products=12, n_households=15, seed=3)
        assert np.abs(nash_solve(mk) - mk.p0).max() < 1e-8

    def test_json_round_trip(self, market):
        doc = market.to_json()
        back = LogitMarket.from_json(doc)
        assert np.array_equal(back.p0, market.p0)
        assert np.array_equal(back.s0, market.s0)
        assert np.array_equal(back.xi, market.xi)
        assert np.array_equal(back.lam, market.lam)
        assert np.array_equal(back.utility_base, market.utility_base)
        parsed = json.loads(doc)
        assert set(parsed) == {"households", "products", "p0", "s0", "price_ceiling"}

    def test_pipeline_csv_and_summary(self, market, tmp_path):
        res = run_calibrated_pipeline(market, 0.9, 0.05, 0.05, 10, 20, seed=1)
        cpath, jpath = tmp_path / "out.csv", tmp_path / "out.json"
        write_pipeline_csv(market, res, cpath, jpath)
        with open(cpath) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["product", "p0", "lambda", "terminal_price", "delta_pct"]
        assert len(rows) == 1 + market.n_products
        summary = json.loads(jpath.read_text())
        assert summary["delta_p50"] == pytest.approx(res.percentiles[1])


def test_validation_errors():
    good = one_by_one_market()
    with pytest.raises(DomainError):
        LogitMarket(**{**good.__dict__, "price_coeffs": np.array([1.0])}).validate()
    with pytest.raises(DomainError):
        LogitMarket(**{**good.__dict__, "s0": np.array([1.2])}).validate()
    with pytest.raises(DomainError):
        LogitMarket(**{**good.__dict__, "price_ceiling": 0.5}).validate()
