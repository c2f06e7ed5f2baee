"""Adoption sampling, order synthesis and package conversion."""

import math

import numpy as np
import pytest

from ecomdemand import ChoiceModelParams, builtin_scenario, evaluate_household
from ecomdemand.errors import ConfigError
from ecomdemand.model import DATE_CATEGORY_DAYS, DeliveryOptionSpec, FeeSchedule, Scenario
from ecomdemand.pipeline import (
    CategoryConfig,
    default_category_configs,
    orders_to_packages,
    run_pipeline,
    sample_adopters,
    synthesize_orders,
    write_packages_csv,
)
from ecomdemand.population import synthesize_population
from ecomdemand.streams import substream

MASSES = {1: 0.28, 2: 0.34, 3: 0.16, 4: 0.14, 5: 0.05, 6: 0.03}


@pytest.fixture(scope="module")
def pop100():
    return synthesize_population(100, MASSES, seed=21)


def _config(rate, mean=3.0):
    return CategoryConfig(category="other-packages", adoption_rate=rate,
                          packages_per_order_mean=mean)


def test_adoption_extremes(pop100):
    rng = substream(1, "adoption")
    assert sample_adopters(pop100, _config(0.0), rng) == []
    rng = substream(1, "adoption")
    assert len(sample_adopters(pop100, _config(1.0), rng)) == 100


def test_adoption_rate_within_binomial_ci():
    pop = synthesize_population(10_000, MASSES, seed=22)
    rng = substream(5, "adoption")
    n = len(sample_adopters(pop, _config(0.30), rng))
    half_width = 2.576 * math.sqrt(10_000 * 0.3 * 0.7)
    assert abs(n - 3000) <= half_width


def test_category_subsets_independent(pop100):
    # per-category streams: each category's adopter set is its own draw
    sets = {}
    for cat, rate in (("groceries", 0.12),
                      ("household-goods-and-medicines", 0.30),
                      ("other-packages", 0.50)):
        config = CategoryConfig(category=cat, adoption_rate=rate)
        sets[cat] = {h.id for h in sample_adopters(
            pop100, config, substream(9, cat, "adoption"))}
    assert len(sets) == 3
    # changing one category's rate must not move the others' draws
    changed = {h.id for h in sample_adopters(
        pop100, CategoryConfig(category="groceries", adoption_rate=0.9),
        substream(9, "groceries", "adoption"))}
    assert changed != sets["groceries"]
    for cat in ("household-goods-and-medicines", "other-packages"):
        again = {h.id for h in sample_adopters(
            pop100, CategoryConfig(category=cat,
                                   adoption_rate={"household-goods-and-medicines": 0.30,
                                                  "other-packages": 0.50}[cat]),
            substream(9, cat, "adoption"))}
        assert again == sets[cat]


def test_config_validation():
    with pytest.raises(ConfigError):
        CategoryConfig(category="books", adoption_rate=0.5)
    with pytest.raises(ConfigError):
        CategoryConfig(category="groceries", adoption_rate=1.5)
    with pytest.raises(ConfigError):
        CategoryConfig(category="groceries", adoption_rate=0.5,
                       packages_per_order_mean=0.0)


def test_zero_adopters_zero_orders(params):
    sc = builtin_scenario("S1")
    assert synthesize_orders([], sc, params, weeks=2, master_seed=1,
                             category="groceries") == []


def test_order_rate_tracks_expectation(params):
    sc = builtin_scenario("S1")
    pop = synthesize_population(1, {2: 1.0}, seed=23)
    household = pop.households[0]
    exact = evaluate_household(household, sc, params)
    weeks = 20_000
    orders = synthesize_orders([household], sc, params, weeks=weeks,
                               master_seed=77, category="other-packages")
    counts = np.zeros(weeks)
    for o in orders:
        counts[o.week] += 1
    se = counts.std(ddof=1) / math.sqrt(weeks)
    assert abs(counts.mean() - exact.expected_frequency) < 3 * se


def test_orders_deterministic_and_worker_independent(pop100, params):
    sc = builtin_scenario("S1")
    adopters = pop100.households[:40]
    a = synthesize_orders(adopters, sc, params, 3, 99, "groceries")
    b = synthesize_orders(adopters, sc, params, 3, 99, "groceries", workers=4)
    assert a == b
    c = synthesize_orders(adopters, sc, params, 3, 100, "groceries")
    assert a != c


def test_packages_mean_one_is_degenerate():
    orders = _dummy_orders(500)
    packages = orders_to_packages(orders, _config(0.5, mean=1.0),
                                  substream(1, "pkg"))
    assert all(p.packages == 1 for p in packages)


def test_packages_shifted_poisson_mean():
    orders = _dummy_orders(100_000)
    packages = orders_to_packages(orders, _config(0.5, mean=3.0),
                                  substream(2, "pkg"))
    mean = np.mean([p.packages for p in packages])
    assert abs(mean - 3.0) <= 0.05
    assert min(p.packages for p in packages) >= 1


def test_packages_empty_and_invalid_mean():
    assert orders_to_packages([], _config(0.5), substream(3, "pkg")) == []
    with pytest.raises(ConfigError, match="packages_per_order_mean"):
        orders_to_packages(_dummy_orders(3), _config(0.5, mean=0.5),
                           substream(3, "pkg"))


def _dummy_orders(n):
    from ecomdemand.pipeline import SynthesizedOrder

    return [
        SynthesizedOrder(household_id=f"h{i % 50}", category="other-packages",
                         week=i % 4, seq=i % 3, day=(i % 4) * 7 + i % 7,
                         order_value=25, option_id="do1", speed="days-2-to-5",
                         date_category="all-days")
        for i in range(n)
    ]


def _mixed_date_scenario():
    # three date categories so the admissible-day invariant bites
    def opt(oid, speed, date, fees):
        return DeliveryOptionSpec(
            id=oid, speed=speed, slot="none", time="daytime", date=date,
            fees=FeeSchedule.from_breaks((0, 25, 50, 100), fees))

    return Scenario(name="mixed", options=[
        opt("wd", "days-2-to-5", "weekday", (6, 0, 0, 0)),
        opt("ws", "one-day", "weekday-and-saturday", (12, 15, 17, 20)),
        opt("all", "same-day", "all-days", (18, 20, 22, 27)),
    ])


def test_requested_days_respect_date_category(pop100, params):
    sc = _mixed_date_scenario()
    date_by_option = {o.id: o.date for o in sc.options}
    orders = synthesize_orders(pop100.households[:30], sc, params, 4, 55,
                               "other-packages")
    assert orders, "expected some orders"
    seen = set()
    for o in orders:
        dow = o.day % 7
        assert dow in DATE_CATEGORY_DAYS[date_by_option[o.option_id]]
        assert 0 <= o.day < 4 * 7
        assert o.week == o.day // 7
        seen.add(o.option_id)
    assert seen == {"wd", "ws", "all"}


def test_run_pipeline_sorted_deterministic(tmp_path, pop100, params):
    sc = builtin_scenario("S1")
    configs = default_category_configs()
    a = run_pipeline(pop100, sc, params, configs, weeks=2, master_seed=31)
    b = run_pipeline(pop100, sc, params, configs, weeks=2, master_seed=31,
                     workers=4)
    assert a == b
    keys = [(p.day, p.household_id, p.order_id) for p in a]
    assert keys == sorted(keys)

    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_packages_csv(a, p1, "config_hash=x seed=31")
    write_packages_csv(b, p2, "config_hash=x seed=31")
    assert p1.read_bytes() == p2.read_bytes()


def test_pipeline_category_independence(pop100, params):
    sc = builtin_scenario("S1")
    base = default_category_configs()
    tweaked = [CategoryConfig(category=c.category,
                              adoption_rate=0.9 if c.category == "groceries"
                              else c.adoption_rate,
                              packages_per_order_mean=c.packages_per_order_mean)
               for c in base]
    a = run_pipeline(pop100, sc, params, base, weeks=1, master_seed=13)
    b = run_pipeline(pop100, sc, params, tweaked, weeks=1, master_seed=13)
    a_other = [p for p in a if p.category != "groceries"]
    b_other = [p for p in b if p.category != "groceries"]
    assert a_other == b_other
    assert [p for p in a if p.category == "groceries"] != \
        [p for p in b if p.category == "groceries"]


def test_param_overrides_apply_per_category(pop100):
    sc = builtin_scenario("S1")
    config = CategoryConfig(category="groceries", adoption_rate=1.0,
                            param_overrides={"alpha": 30.0})
    a = run_pipeline(pop100, sc, None, [config], weeks=1, master_seed=41)
    plain = CategoryConfig(category="groceries", adoption_rate=1.0)
    b = run_pipeline(pop100, sc, None, [plain], weeks=1, master_seed=41)
    mean_a = np.mean([p.order_value for p in a])
    mean_b = np.mean([p.order_value for p in b])
    assert len(a) != len(b) or mean_a != mean_b
