"""Aggregate units and target calibration."""

import pytest

from ecomdemand import ChoiceModelParams, builtin_scenario, evaluate_household
from ecomdemand.calibration import (
    AggregateContext,
    CalibrationTargets,
    FreeParameter,
    calibrate,
    load_targets,
    reference_units,
    simulate_aggregates,
)
from ecomdemand.errors import ConfigError
from ecomdemand.population import synthesize_population

import _oracles as oracle
from conftest import small_scenario

MASSES = {1: 0.28, 2: 0.34, 3: 0.16, 4: 0.14, 5: 0.05, 6: 0.03}


@pytest.fixture(scope="module")
def pop150():
    return synthesize_population(150, MASSES, seed=11)


def test_unit_arithmetic_fixture():
    # one household, two adults, 0.6 orders/week -> 1.3 deliveries/person-month
    dpm, vhm = reference_units(0.6, 11.5, n_households=1, persons_over_15=2.0)
    assert dpm == pytest.approx(1.3, abs=1e-12)
    assert vhm == pytest.approx(11.5 * 52 / 12, abs=1e-9)
    assert vhm == pytest.approx(49.8, abs=0.05)


def test_simulate_aggregates_consistent_with_household_eval(params):
    sc = builtin_scenario("S1")
    pop = synthesize_population(1, {2: 1.0}, seed=3)
    r = evaluate_household(pop.households[0], sc, params)
    ctx = AggregateContext(persons_over_15_share=1.0)
    dpm, vhm = simulate_aggregates(pop, sc, params, ctx)
    assert dpm == pytest.approx(r.expected_frequency * (52 / 12) / 2, rel=1e-12)
    assert vhm == pytest.approx(r.expected_tv * (52 / 12), rel=1e-12)


def test_adoption_rate_scales_aggregates(params, pop150):
    sc = builtin_scenario("S1")
    full = simulate_aggregates(pop150, sc, params, AggregateContext())
    half = simulate_aggregates(pop150, sc, params,
                               AggregateContext(adoption_rate=0.5))
    assert half[0] == pytest.approx(full[0] * 0.5, rel=1e-12)
    assert half[1] == pytest.approx(full[1] * 0.5, rel=1e-12)


def test_aggregates_match_brute_force(params):
    sc = small_scenario()
    pop = synthesize_population(3, {1: 0.5, 3: 0.5}, seed=2)
    ctx = AggregateContext(persons_over_15_share=0.8)
    got = simulate_aggregates(pop, sc, params, ctx)
    freq = sum(oracle.household_demand(h, sc, params)["expected_frequency"]
               for h in pop.households)
    tv = sum(oracle.household_demand(h, sc, params)["expected_tv"]
             for h in pop.households)
    persons = sum(h.size for h in pop.households) * 0.8
    assert got[0] == pytest.approx(freq * (52 / 12) / persons, rel=1e-9)
    assert got[1] == pytest.approx(tv * (52 / 12) / len(pop.households),
                                   rel=1e-9)


def test_targets_validation():
    with pytest.raises(ConfigError, match="deliveries_per_person_month"):
        CalibrationTargets("other-packages", -1.0, 62.0)
    with pytest.raises(ConfigError, match="monthly_value_per_household"):
        CalibrationTargets("other-packages", 3.1, 0.0)
    with pytest.raises(ConfigError):
        CalibrationTargets.builtin("unknown-category")


def test_load_targets_file(tmp_path):
    path = tmp_path / "t.json"
    path.write_text('{"category": "groceries", '
                    '"deliveries_per_person_month": 0.6, '
                    '"monthly_value_per_household": 11}')
    t = load_targets(path)
    assert t.deliveries_per_person_month == 0.6
    path.write_text('{"category": "groceries"}')
    with pytest.raises(ConfigError, match="deliveries_per_person_month"):
        load_targets(path)


def test_alpha_round_trip(pop150, params):
    sc = builtin_scenario("S1")
    ctx = AggregateContext()
    dpm, vhm = simulate_aggregates(pop150, sc, params, ctx)
    targets = CalibrationTargets("other-packages", dpm, vhm, tolerance=0.001)
    start = params.with_overrides({"alpha": 20.0})
    result = calibrate(targets, [FreeParameter("alpha")], pop150, sc, start,
                       ctx)
    assert result.converged
    assert result.iterations <= 500
    assert abs(result.params.alpha - 12.3) / 12.3 < 0.01


@pytest.mark.parametrize("name,truth,start,rel_tol", [
    ("beta_interval", -0.111, -0.4, 0.05),
    ("beta_storage", -0.0183, -0.05, 0.05),
])
def test_single_beta_round_trip(pop150, params, name, truth, start, rel_tol):
    sc = builtin_scenario("S1")
    ctx = AggregateContext()
    dpm, vhm = simulate_aggregates(pop150, sc, params, ctx)
    targets = CalibrationTargets("other-packages", dpm, vhm, tolerance=2e-4)
    result = calibrate(targets, [FreeParameter(name)], pop150, sc,
                       params.with_overrides({name: start}), ctx)
    assert result.converged
    assert abs(getattr(result.params, name) - truth) / abs(truth) < rel_tol


def test_matching_start_returns_unchanged(pop150, params):
    sc = builtin_scenario("S1")
    ctx = AggregateContext()
    dpm, vhm = simulate_aggregates(pop150, sc, params, ctx)
    targets = CalibrationTargets("other-packages", dpm, vhm, tolerance=0.05)
    result = calibrate(targets, [FreeParameter("alpha")], pop150, sc, params,
                       ctx)
    assert result.converged
    assert result.iterations == 0
    assert result.params is params


def test_infeasible_targets_reported_not_raised(params):
    pop = synthesize_population(20, MASSES, seed=4)
    sc = builtin_scenario("S1")
    targets = CalibrationTargets("other-packages", 500.0, 1.0, tolerance=0.05)
    result = calibrate(targets, [FreeParameter("alpha")], pop, sc, params,
                       AggregateContext(), max_iter=40)
    assert not result.converged
    assert "infeasible" in result.message
    assert result.params is not None
    assert result.evaluations > 0


def test_free_parameter_validation():
    with pytest.raises(ConfigError):
        FreeParameter("beta_fee")
    with pytest.raises(ConfigError):
        FreeParameter("alpha", lower=5.0, upper=5.0)
    with pytest.raises(ConfigError):
        calibrate(CalibrationTargets.builtin("groceries"), [], None, None)


def test_report_dict_shape(pop150, params):
    sc = builtin_scenario("S1")
    ctx = AggregateContext()
    dpm, vhm = simulate_aggregates(pop150, sc, params, ctx)
    targets = CalibrationTargets("other-packages", dpm, vhm, tolerance=0.05)
    result = calibrate(targets, [FreeParameter("alpha")], pop150, sc, params,
                       ctx)
    report = result.report_dict()
    assert report["converged"] is True
    assert "alpha" in report["fitted"]
    assert set(report["relative_residuals"]) == {
        "deliveries_per_person_month", "monthly_value_per_household"}
