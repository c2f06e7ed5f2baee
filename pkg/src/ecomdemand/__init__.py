"""Household e-commerce delivery demand simulator.

Jointly models weekly purchase totals, per-order values and delivery-option
choices as nested multinomial logits, so that demand responds to delivery
fees, speeds and free-shipping policy.  Includes scenario comparison,
aggregate calibration, sequential maximum-likelihood estimation and an
order-to-package synthesis pipeline.
"""

from .choice import UtilityVector, expectation, logsum, probabilities, sample_index
from .defaults import builtin_scenario, reference_options
from .kernels import BACKEND
from .model import (
    ChoiceModelParams,
    DeliveryOptionSpec,
    DemandResult,
    FeeSchedule,
    HouseholdProfile,
    OrderEvent,
    Scenario,
    ScenarioTables,
    evaluate_household,
    fee_for,
    option_choice,
    option_utility,
    order_value_utility,
    sample_household_week,
    total_value_utility,
)
from .population import Population, default_population, load_population, synthesize_population

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChoiceModelParams",
    "DeliveryOptionSpec",
    "DemandResult",
    "FeeSchedule",
    "HouseholdProfile",
    "OrderEvent",
    "Population",
    "Scenario",
    "ScenarioTables",
    "UtilityVector",
    "builtin_scenario",
    "default_population",
    "evaluate_household",
    "expectation",
    "fee_for",
    "load_population",
    "logsum",
    "option_choice",
    "option_utility",
    "order_value_utility",
    "probabilities",
    "reference_options",
    "sample_household_week",
    "sample_index",
    "synthesize_population",
    "total_value_utility",
]
