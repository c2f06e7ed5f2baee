import numpy as np
import pytest

from ecomdemand import ChoiceModelParams, HouseholdProfile, builtin_scenario
from ecomdemand.model import (
    DeliveryOptionSpec,
    FeeSchedule,
    Scenario,
    ScenarioTables,
)


@pytest.fixture
def params():
    return ChoiceModelParams()


@pytest.fixture
def s1():
    return builtin_scenario("S1")


@pytest.fixture
def s2():
    return builtin_scenario("S2")


@pytest.fixture(scope="session")
def s1_tables():
    return ScenarioTables(builtin_scenario("S1"), ChoiceModelParams())


@pytest.fixture
def household2():
    return HouseholdProfile("hh-test", 2)


def small_scenario(name="small", fees=((6, 0, 0, 0), (12, 15, 17, 20)),
                   ov_hi=50, tv_hi=50):
    """Truncated-grid two-option scenario for fast exact-oracle tests."""
    options = [
        DeliveryOptionSpec(
            id="std", speed="days-2-to-5", slot="none", time="daytime",
            date="all-days", fees=FeeSchedule.from_breaks((0, 25, 50, 100),
                                                          fees[0])),
        DeliveryOptionSpec(
            id="fast", speed="one-day", slot="none", time="daytime",
            date="weekday", fees=FeeSchedule.from_breaks((0, 25, 50, 100),
                                                         fees[1])),
    ]
    return Scenario(name=name, options=options,
                    ov_grid=np.arange(10, ov_hi + 1),
                    tv_grid=np.arange(1, tv_hi + 1))


@pytest.fixture
def small():
    return small_scenario()


class FixedDraw:
    """Generator stand-in returning preset uniform draws."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)
