"""Built-in assets: scenarios, reference option set, population spec, targets.

All of these are exportable to editable files through the CLI ``gen-*``
commands; the values here are the package defaults used when no file is
given.
"""

from .model import DeliveryOptionSpec, FeeSchedule, Scenario

FEE_BREAKS = (0, 25, 50, 100)

_STANDARD_ATTRS = dict(slot="none", time="daytime", date="all-days")


def _option(oid, speed, fees) -> DeliveryOptionSpec:
    return DeliveryOptionSpec(
        id=oid, speed=speed, fees=FeeSchedule.from_breaks(FEE_BREAKS, fees),
        **_STANDARD_ATTRS,
    )


def _scenario(name, description, fee_rows) -> Scenario:
    std, one_day, same_day = fee_rows
    return Scenario(
        name=name,
        description=description,
        options=[
            _option("do1", "days-2-to-5", std),
            _option("do2", "one-day", one_day),
            _option("do3", "same-day", same_day),
        ],
    )


_EXPRESS_FULL = ((12, 15, 17, 20), (18, 20, 22, 27))
_EXPRESS_REDUCED = ((8.4, 10.5, 11.9, 14), (12.6, 14.0, 15.4, 18.9))


def builtin_scenario(name: str) -> Scenario:
    """One of the built-in scenarios S1..S4 (fresh instance).

    S1/S3 offer free standard shipping above $25; S2/S4 do not.  S3/S4
    charge 70% of the S1/S2 express fees.
    """
    rows = {
        "S1": ("free shipping", ((6, 0, 0, 0),) + _EXPRESS_FULL),
        "S2": ("no free shipping", ((6, 7, 8, 10),) + _EXPRESS_FULL),
        "S3": ("free shipping, 70% express fees",
               ((6, 0, 0, 0),) + _EXPRESS_REDUCED),
        "S4": ("no free shipping, 70% express fees",
               ((6, 7, 8, 10),) + _EXPRESS_REDUCED),
    }
    if name not in rows:
        raise KeyError(f"unknown built-in scenario {name!r}; have {sorted(rows)}")
    description, fee_rows = rows[name]
    return _scenario(name, description, fee_rows)


BUILTIN_SCENARIO_NAMES = ("S1", "S2", "S3", "S4")


def reference_options() -> Scenario:
    """Three-option set with graduated standard fees, used where a neutral
    (non-policy) scenario is needed, e.g. to simulate estimation data."""
    return _scenario(
        "reference",
        "reference option set for synthetic estimation data",
        ((6, 3, 3, 3),) + _EXPRESS_FULL,
    )


# Default synthetic population: 933 households, size distribution with mean
# 2.43 approximating a North-American urban profile.  Fixed so that the
# scenario sensitivity bands are stable across runs.
DEFAULT_POPULATION_SPEC = {
    "count": 933,
    "masses": {1: 0.28, 2: 0.34, 3: 0.16, 4: 0.14, 5: 0.05, 6: 0.03},
    "seed": 7,
}

# Aggregate calibration references per item category:
# (deliveries per person-month among persons aged 15+, monthly purchase
# value in US$ per household).
CALIBRATION_REFERENCES = {
    "groceries": (0.6, 11.0),
    "household-goods-and-medicines": (1.2, 38.0),
    "other-packages": (3.1, 62.0),
}

# Share of household members aged 15 or older assumed when converting
# per-household frequencies into per-person rates.
PERSONS_OVER_15_SHARE = 0.8

# Weekly outputs are scaled to months by 52/12.
WEEKS_PER_MONTH = 52.0 / 12.0

# Item-category adoption rates (probability a household shops the category
# at all) and the mean number of packages one order generates.
DEFAULT_ADOPTION_RATES = {
    "groceries": 0.12,
    "household-goods-and-medicines": 0.30,
    "other-packages": 0.50,
}
DEFAULT_PACKAGES_PER_ORDER = 3.0
