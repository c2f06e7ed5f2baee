"""Demand-to-package synthesis.

Per item category: sample adopting households, generate weekly order
events through the demand model, and convert orders into a package stream
with delivery-deadline attributes.  Every stochastic step draws from a
stream keyed by (master seed, household, category, week), so the output is
byte-identical for any worker count and categories do not perturb each
other.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .defaults import DEFAULT_ADOPTION_RATES, DEFAULT_PACKAGES_PER_ORDER
from .errors import ConfigError
from .model import (
    ChoiceModelParams,
    DATE_CATEGORY_DAYS,
    HouseholdProfile,
    Scenario,
    ScenarioTables,
    resolve_params,
    sample_household_week,
)
from .population import Population
from .streams import substream

CATEGORIES = ("groceries", "household-goods-and-medicines", "other-packages")


@dataclass
class CategoryConfig:
    """Per-item-category simulation settings."""

    category: str
    adoption_rate: float
    packages_per_order_mean: float = DEFAULT_PACKAGES_PER_ORDER
    param_overrides: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ConfigError(
                f"unknown category {self.category!r}; expected one of {CATEGORIES}")
        if not 0.0 <= self.adoption_rate <= 1.0:
            raise ConfigError(
                f"{self.category}: adoption_rate must be in [0, 1], "
                f"got {self.adoption_rate}")
        if not self.packages_per_order_mean > 0:
            raise ConfigError(
                f"{self.category}: packages_per_order_mean must be > 0")

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "adoption_rate": self.adoption_rate,
            "packages_per_order_mean": self.packages_per_order_mean,
            "param_overrides": dict(self.param_overrides),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryConfig":
        return cls(
            category=d["category"],
            adoption_rate=float(d["adoption_rate"]),
            packages_per_order_mean=float(
                d.get("packages_per_order_mean", DEFAULT_PACKAGES_PER_ORDER)),
            param_overrides=dict(d.get("param_overrides", {})),
        )


def default_category_configs() -> List[CategoryConfig]:
    return [CategoryConfig(category=c, adoption_rate=r)
            for c, r in DEFAULT_ADOPTION_RATES.items()]


@dataclass(frozen=True)
class SynthesizedOrder:
    """One order with its requested delivery day (day = week*7 + weekday)."""

    household_id: str
    category: str
    week: int
    seq: int
    day: int
    order_value: int
    option_id: str
    speed: str
    date_category: str

    @property
    def order_id(self) -> str:
        return f"{self.category}:{self.household_id}:w{self.week}:{self.seq}"


@dataclass(frozen=True)
class PackageEvent:
    day: int
    household_id: str
    category: str
    order_id: str
    order_value: int
    option_id: str
    speed: str
    packages: int


def sample_adopters(population: Population, config: CategoryConfig,
                    rng: np.random.Generator) -> List[HouseholdProfile]:
    """Independent Bernoulli(adoption_rate) per household, in population order."""
    draws = rng.random(len(population.households))
    return [h for h, u in zip(population.households, draws)
            if u < config.adoption_rate]


def _orders_for_household(household, tables, options_by_id, weeks,
                          master_seed, category) -> List[SynthesizedOrder]:
    p_tv, _ = tables.tv_choice(min(household.size, 20))
    out = []
    for week in range(weeks):
        rng = substream(master_seed, household.id, category, week)
        _, events = sample_household_week(
            household, tables.scenario, tables.params, rng,
            tables=tables, week=week, p_tv=p_tv)
        for ev in events:
            option = options_by_id[ev.option_id]
            admissible = DATE_CATEGORY_DAYS[option.date]
            dow = admissible[int(rng.integers(0, len(admissible)))]
            out.append(SynthesizedOrder(
                household_id=household.id, category=category, week=week,
                seq=ev.seq, day=week * 7 + dow, order_value=ev.order_value,
                option_id=ev.option_id, speed=ev.speed,
                date_category=option.date))
    return out


_WORKER = {}


def _init_order_worker(scenario, params, weeks, master_seed, category):
    tables = ScenarioTables(scenario, params)
    _WORKER.update(
        tables=tables,
        options_by_id={o.id: o for o in scenario.options},
        weeks=weeks, master_seed=master_seed, category=category,
    )


def _order_worker(batch):
    return [
        _orders_for_household(h, _WORKER["tables"], _WORKER["options_by_id"],
                              _WORKER["weeks"], _WORKER["master_seed"],
                              _WORKER["category"])
        for h in batch
    ]


def synthesize_orders(adopters: List[HouseholdProfile], scenario: Scenario,
                      params: Optional[ChoiceModelParams], weeks: int,
                      master_seed: int, category: str,
                      workers: int = 1) -> List[SynthesizedOrder]:
    """Weekly order events for every adopter over the horizon.

    Per household-week: the demand model samples (tv, ov, order count,
    option per order), then each order's requested day is drawn uniformly
    over the chosen option's admissible weekdays.
    """
    if weeks < 1:
        raise ConfigError(f"weeks must be >= 1, got {weeks}")
    params = resolve_params(scenario, params)
    if not adopters:
        return []
    if workers > 1 and len(adopters) > 1:
        size = max(1, (len(adopters) + workers * 4 - 1) // (workers * 4))
        batches = [adopters[i:i + size] for i in range(0, len(adopters), size)]
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_order_worker,
            initargs=(scenario, params, weeks, master_seed, category),
        ) as pool:
            nested = [b for batch in pool.map(_order_worker, batches) for b in batch]
    else:
        _init_order_worker(scenario, params, weeks, master_seed, category)
        nested = _order_worker(adopters)
    return [order for per_household in nested for order in per_household]


def orders_to_packages(orders: List[SynthesizedOrder], config: CategoryConfig,
                       rng: np.random.Generator) -> List[PackageEvent]:
    """Convert orders to packages: counts are 1 + Poisson(mean - 1).

    The stream is consumed over the canonically sorted order list, so the
    result does not depend on how orders were produced or chunked.
    """
    if config.packages_per_order_mean < 1.0:
        raise ConfigError(
            f"{config.category}: packages_per_order_mean must be >= 1 "
            f"(every order ships at least one package), "
            f"got {config.packages_per_order_mean}")
    ordered = sorted(orders, key=lambda o: (o.day, o.household_id, o.order_id))
    excess = config.packages_per_order_mean - 1.0
    return [
        PackageEvent(
            day=o.day, household_id=o.household_id, category=o.category,
            order_id=o.order_id, order_value=o.order_value,
            option_id=o.option_id, speed=o.speed,
            packages=1 + int(rng.poisson(excess)),
        )
        for o in ordered
    ]


def run_pipeline(population: Population, scenario: Scenario,
                 params: Optional[ChoiceModelParams],
                 configs: List[CategoryConfig], weeks: int, master_seed: int,
                 workers: int = 1) -> List[PackageEvent]:
    """Full demand-to-package synthesis over all categories.

    Adoption, order generation and package conversion each use per-category
    substreams; the merged stream is sorted by (day, household, order id).
    """
    all_packages: List[PackageEvent] = []
    for config in configs:
        base = resolve_params(scenario, params)
        cat_params = (base.with_overrides(config.param_overrides)
                      if config.param_overrides else base)
        adopters = sample_adopters(
            population, config, substream(master_seed, config.category, "adoption"))
        orders = synthesize_orders(adopters, scenario, cat_params, weeks,
                                   master_seed, config.category, workers=workers)
        packages = orders_to_packages(
            orders, config, substream(master_seed, config.category, "packages"))
        all_packages.extend(packages)
    all_packages.sort(key=lambda p: (p.day, p.household_id, p.order_id))
    return all_packages


def write_packages_csv(packages: List[PackageEvent], path, header_comment=None):
    with Path(path).open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["day", "household_id", "category", "order_id",
                    "order_value_usd", "option_id", "speed", "packages"])
        for p in packages:
            w.writerow([p.day, p.household_id, p.category, p.order_id,
                        p.order_value, p.option_id, p.speed, p.packages])
