"""Demand model: fee schedules, the three utility levels, household
evaluation and week sampling."""

import math

import numpy as np
import pytest

import _oracles as oracle
from ecomdemand import (
    ChoiceModelParams,
    HouseholdProfile,
    builtin_scenario,
    evaluate_household,
    fee_for,
    option_choice,
    option_utility,
    order_value_utility,
    sample_household_week,
    total_value_utility,
)
from ecomdemand.errors import InvalidInputError, ScenarioError
from ecomdemand.model import (
    DeliveryOptionSpec,
    FeeSchedule,
    Scenario,
    ScenarioTables,
)
from ecomdemand import kernels

from conftest import small_scenario


# --- fee schedules ---------------------------------------------------------

def test_fee_lookup_spec_values(s1, s2):
    assert fee_for(s1.options[0], 30) == 0.0
    assert fee_for(s2.options[0], 30) == 7.0
    # boundary order values land in the upper bracket (lower-inclusive)
    assert fee_for(s1.options[0], 25) == 0.0
    assert fee_for(s1.options[0], 24.999) == 6.0
    assert fee_for(s1.options[1], 100) == 20.0


def test_fee_schedule_validation():
    with pytest.raises(InvalidInputError):
        FeeSchedule(())  # empty
    with pytest.raises(InvalidInputError):
        FeeSchedule(((1.0, 25.0, 5.0), (25.0, math.inf, 0.0)))  # not from 0
    with pytest.raises(InvalidInputError):
        FeeSchedule(((0.0, 25.0, 5.0), (30.0, math.inf, 0.0)))  # gap
    with pytest.raises(InvalidInputError):
        FeeSchedule(((0.0, 25.0, 5.0), (25.0, 50.0, 0.0)))  # not open-ended
    with pytest.raises(InvalidInputError):
        FeeSchedule(((0.0, math.inf, -1.0),))  # negative fee


def test_option_attribute_validation():
    fees = FeeSchedule.from_breaks((0,), (5,))
    with pytest.raises(InvalidInputError):
        DeliveryOptionSpec(id="x", speed="overnight", slot="none",
                           time="daytime", date="all-days", fees=fees)


# --- option level ----------------------------------------------------------

def test_option_utility_part_worth_sum(s1, params):
    # free shipping: the fee term is exactly zero, leaving the part-worths
    u = option_utility(s1.options[0], 30, params)
    assert u == pytest.approx(-0.497, abs=1e-12)
    parts = (params.beta_speed["days-2-to-5"] + params.beta_slot["none"]
             + params.beta_time["daytime"] + params.beta_date["all-days"])
    assert u == parts  # ln(0 + 1) contributes exactly 0


def test_option_utility_fee_term(s1, params):
    u = option_utility(s1.options[1], 30, params)
    assert u == pytest.approx(-3.974, abs=1e-3)
    assert u == pytest.approx(oracle.option_utility(s1.options[1], 30, params),
                              abs=1e-12)


def test_option_choice_oracle_triple(s1, params):
    utils, probs, ls = option_choice(s1, 30, params)
    assert np.allclose(utils, [-0.497, -3.974, -4.253], atol=1e-3)
    assert np.allclose(probs, [0.9486, 0.0293, 0.0222], atol=1e-3)
    assert ls == pytest.approx(-0.4441, abs=1e-3)


def test_option_choice_single_option(params):
    sc = Scenario(name="solo", options=[builtin_scenario("S1").options[0]])
    utils, probs, ls = option_choice(sc, 30, params)
    assert probs[0] == pytest.approx(1.0, abs=1e-12)
    assert ls == pytest.approx(utils[0], abs=1e-12)


def test_option_choice_same_bracket_identical(s1, params):
    a = option_choice(s1, 30, params)
    b = option_choice(s1, 40, params)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])
    assert a[2] == b[2]


def test_bracket_cache_bitwise_equal_uncached(s1, params):
    # the per-segment tables must reproduce the direct computation exactly
    tables = ScenarioTables(s1, params)
    for j, ov in enumerate(s1.ov_grid):
        utils, probs, ls = option_choice(s1, float(ov), params)
        k = tables.seg[j]
        assert np.array_equal(tables.opt_utils[k], utils)
        assert np.array_equal(tables.opt_probs[k], probs)
        assert tables.l1_per_ov[j] == ls


def test_fee_monotonicity_single_option_probability(params):
    base = small_scenario()
    for bump in (1.0, 5.0, 20.0):
        bumped_fees = tuple(f + bump for f in (12, 15, 17, 20))
        bumped = small_scenario(fees=((6, 0, 0, 0), bumped_fees))
        for ov in (12, 30, 60, 150):
            _, p0, _ = option_choice(base, ov, params)
            _, p1, _ = option_choice(bumped, ov, params)
            assert p1[1] < p0[1]      # pricier option loses share
            assert p1[0] >= p0[0]     # the other weakly gains


def test_raising_all_fees_decreases_order_value_term(params):
    # isolate the logsum carrier by zeroing the other order-value terms
    p = params.with_overrides({"beta_interval": 0.0, "beta_storage": 0.0})
    base = small_scenario()
    pricier = small_scenario(fees=((8, 2, 2, 2), (14, 17, 19, 22)))
    for ov, tv in ((10, 30), (30, 30), (45, 20)):
        assert (order_value_utility(ov, tv, pricier, p)
                < order_value_utility(ov, tv, base, p))


# --- order-value level -----------------------------------------------------

def test_order_value_utility_oracle(s1, params):
    assert order_value_utility(50, 50, s1, params) == pytest.approx(-1.500,
                                                                    abs=2e-3)
    assert order_value_utility(50, 50, s1, params) == pytest.approx(
        oracle.order_value_utility(50, 50, s1.options, params), abs=1e-12)


def test_order_value_utility_zero_params(s1, params):
    zero = params.with_overrides({"beta_logsumdo": 0.0, "beta_interval": 0.0,
                                  "beta_storage": 0.0})
    for ov, tv in ((10, 1), (77, 300), (300, 600)):
        assert order_value_utility(ov, tv, s1, zero) == 0.0


def test_order_value_utility_rejects_nonpositive(s1, params):
    with pytest.raises(InvalidInputError):
        order_value_utility(0, 50, s1, params)
    with pytest.raises(InvalidInputError):
        order_value_utility(50, 0, s1, params)


# --- total-value level -----------------------------------------------------

def test_need_gap_vanishes_on_grid(s1):
    # alpha * hhs on the grid: the quadratic term is exactly zero
    p = ChoiceModelParams().with_overrides({"alpha": 12.0})
    tables = ScenarioTables(s1, p)
    hh = HouseholdProfile("x", 2)
    full = total_value_utility(24, hh, s1, p, tables=tables)
    idx = 24 - int(s1.tv_grid[0])
    assert full == p.beta_logsumov * tables.ov_logsum[idx]


def test_need_gap_value(s1, params, household2):
    tables = ScenarioTables(s1, params)
    full = total_value_utility(100, household2, s1, params, tables=tables)
    idx = 100 - int(s1.tv_grid[0])
    gap = full - params.beta_logsumov * tables.ov_logsum[idx]
    assert gap == pytest.approx(-0.99490, abs=1e-5)


def test_total_value_utility_brute_force(s1, params, household2):
    # independent re-derivation of all 291 order-value utilities, no caching
    tv = 100
    ov_logsum = oracle.softmax(
        [oracle.order_value_utility(int(ov), tv, s1.options, params)
         for ov in s1.ov_grid])[1]
    need = params.alpha * 2.0
    expect = (params.beta_logsumov * ov_logsum
              + params.beta_hhs * (need - tv) ** 2)
    got = total_value_utility(tv, household2, s1, params)
    assert got == pytest.approx(expect, abs=1e-9)


def test_total_value_utility_off_grid_rejected(s1, params, household2):
    with pytest.raises(InvalidInputError):
        total_value_utility(0, household2, s1, params)


# --- household evaluation --------------------------------------------------

def test_dominant_need_pins_total_value(params):
    sc = small_scenario(ov_hi=60, tv_hi=80)
    solo = Scenario(name="solo", options=[sc.options[0]],
                    ov_grid=sc.ov_grid, tv_grid=sc.tv_grid)
    p = params.with_overrides({"beta_hhs": params.beta_hhs * 1e6,
                               "alpha": 12.0})
    r = evaluate_household(HouseholdProfile("x", 3), solo, p)
    assert abs(r.expected_tv - 36.0) < 1.0


def test_evaluate_household_matches_brute_force(params, household2):
    sc = small_scenario()
    got = evaluate_household(household2, sc, params)
    want = oracle.household_demand(household2, sc, params)
    assert got.expected_tv == pytest.approx(want["expected_tv"], rel=1e-9)
    assert got.expected_frequency == pytest.approx(want["expected_frequency"],
                                                   rel=1e-9)
    assert got.expected_ov == pytest.approx(want["expected_ov"], rel=1e-9)
    for oid, share in want["option_shares"].items():
        assert got.option_shares[oid] == pytest.approx(share, rel=1e-9)
    assert np.allclose(got.tv_distribution, want["p_tv"], atol=1e-12)


def test_option_shares_sum_to_one(s1_tables, household2):
    r = evaluate_household(household2, s1_tables.scenario, s1_tables.params,
                           tables=s1_tables)
    assert sum(r.option_shares.values()) == pytest.approx(1.0, abs=1e-9)


def test_frequency_identity_exact(s1_tables, household2):
    r = evaluate_household(household2, s1_tables.scenario, s1_tables.params,
                           tables=s1_tables)
    recomputed = kernels.dot(r.tv_distribution, s1_tables.rate)
    assert recomputed == r.expected_frequency


def test_free_shipping_attracts_standard_option(s1, s2, params):
    # within the $25-50 bracket the free option draws more choices under S1
    _, p1, _ = option_choice(s1, 30, params)
    _, p2, _ = option_choice(s2, 30, params)
    assert p1[0] > p2[0]


def test_household_size_cap_warns(s1_tables):
    big = HouseholdProfile("big", 25)
    with pytest.warns(UserWarning, match="capped"):
        r = evaluate_household(big, s1_tables.scenario, s1_tables.params,
                               tables=s1_tables)
    capped = evaluate_household(HouseholdProfile("cap", 20),
                                s1_tables.scenario, s1_tables.params,
                                tables=s1_tables)
    assert r.expected_tv == capped.expected_tv


def test_grid_saturation_diagnostic(params):
    sc = small_scenario(tv_hi=40)
    p = params.with_overrides({"alpha": 60.0,
                               "beta_hhs": -0.05})
    r = evaluate_household(HouseholdProfile("x", 4), sc, p)
    assert r.grid_saturated
    # the full production grid leaves no meaningful mass at the ceiling
    full = evaluate_household(HouseholdProfile("x", 1), builtin_scenario("S1"),
                              params)
    assert not full.grid_saturated


def test_empty_option_set_rejected():
    with pytest.raises(ScenarioError):
        Scenario(name="none", options=[])


# --- week sampling ---------------------------------------------------------

def test_sample_week_deterministic(s1_tables, household2):
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(202)
        res, events = sample_household_week(
            household2, s1_tables.scenario, s1_tables.params, rng,
            tables=s1_tables)
        runs.append((res, tuple(events)))
    assert runs[0][1] == runs[1][1]
    assert runs[0][0].expected_tv == runs[1][0].expected_tv
    assert runs[0][0].orders == runs[1][0].orders


def test_sample_week_rate_always_positive(s1_tables, household2):
    # tv >= 1 and ov <= 300 force a strictly positive order rate
    assert float(s1_tables.tv[0]) >= 1
    assert float(s1_tables.ov[-1]) <= 300
    rng = np.random.default_rng(9)
    for _ in range(200):
        res, events = sample_household_week(
            household2, s1_tables.scenario, s1_tables.params, rng,
            tables=s1_tables)
        assert res.expected_tv / res.expected_ov > 0
        assert res.orders == len(events)


def test_sample_week_events_carry_option_metadata(s1_tables, household2):
    rng = np.random.default_rng(77)
    ids = {o.id for o in s1_tables.scenario.options}
    for _ in range(50):
        _, events = sample_household_week(
            household2, s1_tables.scenario, s1_tables.params, rng,
            tables=s1_tables, week=3)
        for ev in events:
            assert ev.option_id in ids
            assert ev.week == 3
            assert 10 <= ev.order_value <= 300


def test_sampled_mean_tracks_expectation(s1_tables, household2):
    exact = evaluate_household(household2, s1_tables.scenario,
                               s1_tables.params, tables=s1_tables)
    rng = np.random.default_rng(31)
    n = 20_000
    p_tv, _ = s1_tables.tv_choice(2)
    freqs = np.empty(n)
    for i in range(n):
        res, _ = sample_household_week(
            household2, s1_tables.scenario, s1_tables.params, rng,
            tables=s1_tables, p_tv=p_tv)
        freqs[i] = res.expected_frequency
    se = freqs.std(ddof=1) / math.sqrt(n)
    assert abs(freqs.mean() - exact.expected_frequency) < 3 * se


# --- params/scenario serialization -----------------------------------------

def test_params_roundtrip_and_validation(params):
    d = params.to_dict()
    assert ChoiceModelParams.from_dict(d) == params
    with pytest.raises(InvalidInputError):
        ChoiceModelParams.from_dict({"beta_unknown": 1.0})
    with pytest.raises(InvalidInputError):
        ChoiceModelParams(beta_fee=float("nan"))
    with pytest.raises(InvalidInputError):
        ChoiceModelParams(beta_speed={"same-day": 0.1})


def test_scenario_roundtrip(s1):
    again = Scenario.from_dict(s1.to_dict())
    assert again.name == s1.name
    assert [o.to_dict() for o in again.options] == [o.to_dict() for o in s1.options]
    assert np.array_equal(again.ov_grid, s1.ov_grid)
    assert np.array_equal(again.tv_grid, s1.tv_grid)


def test_scenario_grid_validation(s1):
    with pytest.raises(ScenarioError):
        Scenario(name="bad", options=s1.options, ov_grid=np.array([30, 20]))
    with pytest.raises(ScenarioError):
        Scenario(name="bad", options=s1.options, tv_grid=np.array([]))
