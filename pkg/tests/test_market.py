import numpy as np
import pytest

from misprice.errors import DomainError
from misprice.market import (
    MarketParams,
    best_response,
    capped_monopoly,
    expected_demand,
    monopoly_price,
    nash_price,
    validate,
)

CANON = MarketParams(a=1.0, b=1.0, c=0.5, n_firms=2, p_min=0.1, p_max=1.0)


def test_canonical_params_valid():
    assert validate(CANON) is CANON
    assert nash_price(CANON) == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_b_greater_c_violation():
    with pytest.raises(DomainError, match="b > c"):
        MarketParams(a=1.0, b=1.0, c=1.5)


def test_p_max_below_nash_rejected():
    # Nash price 2/3 exceeds the cap 0.6
    with pytest.raises(DomainError, match="p_max below Nash"):
        MarketParams(a=1.0, b=1.0, c=0.5, p_max=0.6)


def test_p_max_above_choke_rejected():
    with pytest.raises(DomainError, match="p_max <= a/b"):
        MarketParams(a=1.0, b=1.0, c=0.5, p_max=1.2)


def test_default_floor_and_cap():
    p = MarketParams(a=2.0, b=1.0, c=0.5)
    assert p.p_min == pytest.approx(0.05 * 2.0)
    assert p.p_max == pytest.approx(2.0)


def test_expected_demand_hand_value():
    # symmetric Nash prices: demand a - (b - c) p = 2/3
    assert expected_demand(CANON, [2 / 3, 2 / 3], 0) == pytest.approx(2 / 3)
    assert expected_demand(CANON, [2 / 3, 2 / 3], 1) == pytest.approx(2 / 3)


def test_expected_demand_positive_at_cap():
    p = CANON
    assert expected_demand(p, [p.p_max, p.p_max], 0) == pytest.approx(p.c * p.p_max)
    assert expected_demand(p, [p.p_max, p.p_min], 0) > 0


def test_expected_demand_symmetric_independent_of_n():
    pbar = 0.7
    for n in (2, 3, 7):
        p = MarketParams(a=1.0, b=1.0, c=0.5, n_firms=n, p_min=0.1, p_max=1.0)
        got = expected_demand(p, [pbar] * n, n - 1)
        assert got == pytest.approx(1.0 - 0.5 * pbar)


def test_expected_demand_bad_firm_index():
    with pytest.raises(IndexError):
        expected_demand(CANON, [0.5, 0.5], 2)
    with pytest.raises(IndexError):
        expected_demand(CANON, [0.5, 0.5], -1)


def test_best_response_values():
    assert best_response(CANON, 2 / 3) == pytest.approx(2 / 3)
    assert best_response(CANON, 1.0) == pytest.approx(0.75)
    tiny_c = MarketParams(a=1.0, b=1.0, c=1e-9, p_min=0.1, p_max=1.0)
    assert best_response(tiny_c, 0.3) == pytest.approx(0.5, abs=1e-9)
    assert best_response(tiny_c, 0.9) == pytest.approx(0.5, abs=1e-9)


def test_benchmarks():
    assert nash_price(CANON) == pytest.approx(2 / 3, abs=1e-15)
    assert monopoly_price(CANON) == pytest.approx(1.0, abs=1e-15)
    assert nash_price(MarketParams(a=2.0, b=1.0, c=0.5, p_min=0.1, p_max=2.0)) == pytest.approx(4 / 3)
    capped = MarketParams(a=1.0, b=1.0, c=0.5, p_min=0.1, p_max=0.9)
    assert capped_monopoly(capped) == pytest.approx(0.9)
    assert capped_monopoly(CANON) == pytest.approx(1.0)


def test_invariants_random_params():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.uniform(0.5, 3.0)
        b = rng.uniform(0.5, 2.0)
        c = rng.uniform(0.05, 0.95) * b
        nash = a / (2 * b - c)
        p_max = rng.uniform(nash + 1e-6, a / b)
        p = MarketParams(a=a, b=b, c=c, p_min=0.5 * nash, p_max=p_max)
        assert nash_price(p) < monopoly_price(p)
        assert best_response(p, nash_price(p)) == pytest.approx(nash_price(p), abs=1e-12)
        # affine contraction with slope c / 2b
        x, y = rng.uniform(p.p_min, p.p_max, 2)
        assert abs(best_response(p, x) - best_response(p, y)) == pytest.approx(
            (c / (2 * b)) * abs(x - y), rel=1e-10
        )
        # demand floor on the feasible box
        assert expected_demand(p, [p.p_max, p.p_min], 0) >= a - b * p.p_max + c * p.p_min - 1e-12
        assert a - b * p.p_max + c * p.p_min > 0


def test_dict_round_trip():
    d = CANON.to_dict()
    assert MarketParams.from_dict(d) == CANON
    with pytest.raises(DomainError, match="unknown market parameter"):
        MarketParams.from_dict({"a": 1.0, "b": 1.0, "c": 0.5, "bogus": 1})
