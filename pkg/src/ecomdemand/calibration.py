"""Aggregate-target calibration of demand parameters.

Adjusts a small set of free coefficients (purchase-need scale, order
interval penalty, storage cost) so that simulated deliveries per
person-month and monthly purchase value per household match reference
statistics for an item category.  The search is a bounded Nelder-Mead
simplex over box-scaled parameters minimizing the sum of squared relative
residuals.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

from .defaults import (
    CALIBRATION_REFERENCES,
    PERSONS_OVER_15_SHARE,
    WEEKS_PER_MONTH,
)
from .errors import ConfigError
from .model import ChoiceModelParams, Scenario, ScenarioTables, evaluate_household
from .population import Population

FREE_PARAM_NAMES = ("alpha", "beta_interval", "beta_storage")

DEFAULT_BOUNDS = {
    "alpha": (1.0, 80.0),
    "beta_interval": (-2.0, -1e-4),
    "beta_storage": (-0.5, -1e-5),
}


@dataclass
class CalibrationTargets:
    """Reference aggregates for one item category."""

    category: str
    deliveries_per_person_month: float
    monthly_value_per_household: float
    tolerance: float = 0.05  # relative

    def __post_init__(self):
        for name in ("deliveries_per_person_month", "monthly_value_per_household"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigError(f"target {name} must be > 0, got {v}")
        if not 0 < self.tolerance < 1:
            raise ConfigError(f"tolerance must be in (0, 1), got {self.tolerance}")

    @classmethod
    def builtin(cls, category: str, tolerance: float = 0.05) -> "CalibrationTargets":
        if category not in CALIBRATION_REFERENCES:
            raise ConfigError(
                f"no built-in targets for {category!r}; "
                f"have {sorted(CALIBRATION_REFERENCES)}"
            )
        dpm, vhm = CALIBRATION_REFERENCES[category]
        return cls(category, dpm, vhm, tolerance)

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "deliveries_per_person_month": self.deliveries_per_person_month,
            "monthly_value_per_household": self.monthly_value_per_household,
            "tolerance": self.tolerance,
        }


@dataclass
class AggregateContext:
    """Unit-conversion context for the aggregate metrics.

    ``adoption_rate`` scales the population aggregates by the expected
    share of households that shop the category at all.
    """

    persons_over_15_share: float = PERSONS_OVER_15_SHARE
    weeks_per_month: float = WEEKS_PER_MONTH
    adoption_rate: float = 1.0

    def __post_init__(self):
        if not 0 < self.persons_over_15_share <= 1:
            raise ConfigError("persons_over_15_share must be in (0, 1]")
        if not 0 < self.adoption_rate <= 1:
            raise ConfigError("adoption_rate must be in (0, 1]")


@dataclass
class FreeParameter:
    name: str
    lower: float = None
    upper: float = None

    def __post_init__(self):
        if self.name not in FREE_PARAM_NAMES:
            raise ConfigError(
                f"free parameter must be one of {FREE_PARAM_NAMES}, got {self.name!r}"
            )
        lo, hi = DEFAULT_BOUNDS[self.name]
        if self.lower is None:
            self.lower = lo
        if self.upper is None:
            self.upper = hi
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)
                and self.lower < self.upper):
            raise ConfigError(
                f"{self.name}: bounds must be finite with lower < upper, "
                f"got ({self.lower}, {self.upper})"
            )


@dataclass
class CalibrationResult:
    params: ChoiceModelParams
    converged: bool
    iterations: int
    evaluations: int
    simulated: Tuple[float, float]
    residuals: Tuple[float, float]  # relative residuals per metric
    targets: CalibrationTargets
    free: List[FreeParameter]
    message: str = ""
    history: List[dict] = field(default_factory=list, repr=False)

    def report_dict(self) -> dict:
        return {
            "targets": self.targets.to_dict(),
            "free_parameters": [
                {"name": f.name, "lower": f.lower, "upper": f.upper}
                for f in self.free
            ],
            "fitted": {f.name: getattr(self.params, f.name) for f in self.free},
            "simulated": {
                "deliveries_per_person_month": self.simulated[0],
                "monthly_value_per_household": self.simulated[1],
            },
            "relative_residuals": {
                "deliveries_per_person_month": self.residuals[0],
                "monthly_value_per_household": self.residuals[1],
            },
            "converged": self.converged,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "message": self.message,
        }


def reference_units(weekly_orders: float, weekly_value: float,
                    n_households: int, persons_over_15: float,
                    context: Optional[AggregateContext] = None,
                    ) -> Tuple[float, float]:
    """Convert weekly population totals to the reference units:
    (deliveries per person-month among persons 15+, monthly US$ per
    household)."""
    ctx = context or AggregateContext()
    dpm = ctx.adoption_rate * weekly_orders * ctx.weeks_per_month / persons_over_15
    vhm = ctx.adoption_rate * weekly_value * ctx.weeks_per_month / n_households
    return dpm, vhm


def simulate_aggregates(population: Population, scenario: Scenario,
                        params: Optional[ChoiceModelParams] = None,
                        context: Optional[AggregateContext] = None,
                        ) -> Tuple[float, float]:
    """Expectation-mode aggregates in reference units."""
    ctx = context or AggregateContext()
    tables = ScenarioTables(scenario, params)
    freq_sum = tv_sum = 0.0
    for h in population.households:
        r = evaluate_household(h, scenario, tables.params, tables=tables)
        freq_sum += r.expected_frequency
        tv_sum += r.expected_tv
    persons = float(sum(h.size for h in population.households)) * ctx.persons_over_15_share
    return reference_units(freq_sum, tv_sum, len(population.households),
                           persons, ctx)


class _Converged(Exception):
    pass


def calibrate(targets: CalibrationTargets, free: List[FreeParameter],
              population: Population, scenario: Scenario,
              params0: Optional[ChoiceModelParams] = None,
              context: Optional[AggregateContext] = None,
              max_iter: int = 500) -> CalibrationResult:
    """Fit the free parameters to the targets by bounded direct search.

    The simplex runs in the unit box (each free parameter scaled by its
    bounds); it stops when both relative residuals are within the target
    tolerance, when the simplex collapses below 1e-6 of the box width, or
    after ``max_iter`` iterations.  Infeasible targets yield a
    non-converged result carrying the best point found, not an exception.
    """
    if not free:
        raise ConfigError("calibrate needs at least one free parameter")
    params0 = params0 if params0 is not None else ChoiceModelParams()
    ctx = context or AggregateContext()
    t = np.array([targets.deliveries_per_person_month,
                  targets.monthly_value_per_household])

    lo = np.array([f.lower for f in free])
    hi = np.array([f.upper for f in free])
    names = [f.name for f in free]

    def to_params(x) -> ChoiceModelParams:
        values = lo + np.clip(x, 0.0, 1.0) * (hi - lo)
        return params0.with_overrides(dict(zip(names, values)))

    state = {"best": None, "evals": 0, "history": []}

    def residuals_at(params) -> Tuple[np.ndarray, Tuple[float, float]]:
        sim = simulate_aggregates(population, scenario, params, ctx)
        rel = (np.array(sim) - t) / t
        return rel, sim

    def objective(x) -> float:
        params = to_params(x)
        rel, sim = residuals_at(params)
        loss = float(rel @ rel)
        state["evals"] += 1
        state["history"].append(
            {"x": [float(v) for v in x], "loss": loss,
             "residuals": [float(r) for r in rel]})
        if state["best"] is None or loss < state["best"][0]:
            state["best"] = (loss, params, rel, sim)
        if np.all(np.abs(rel) < targets.tolerance):
            raise _Converged
        return loss

    # Start point already on target: report it unchanged with zero work.
    rel0, sim0 = residuals_at(params0)
    if np.all(np.abs(rel0) < targets.tolerance):
        return CalibrationResult(
            params=params0, converged=True, iterations=0, evaluations=1,
            simulated=sim0, residuals=(float(rel0[0]), float(rel0[1])),
            targets=targets, free=free,
            message="start point already within tolerance",
        )

    x0 = np.clip((np.array([getattr(params0, n) for n in names]) - lo) / (hi - lo),
                 0.0, 1.0)
    k = len(free)
    iterations = 0
    converged = False
    message = ""
    try:
        # Coarse deterministic probe of the box so the simplex starts near
        # the basin instead of crawling in from a corner.
        best_x, best_loss = x0, objective(x0)
        probe_rng = np.random.default_rng(1)
        for xp in probe_rng.random((8 * k, k)):
            loss = objective(xp)
            if loss < best_loss:
                best_x, best_loss = xp, loss

        # Nelder-Mead with restarts around the incumbent; each restart
        # rebuilds a non-degenerate simplex with a smaller span.
        for span in (0.25, 0.10, 0.04):
            if iterations >= max_iter:
                break
            simplex = [best_x]
            for i in range(k):
                v = best_x.copy()
                step = span if v[i] + span <= 1.0 else -span
                v[i] = min(1.0, max(0.0, v[i] + step))
                simplex.append(v)
            res = optimize.minimize(
                objective, best_x, method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * k,
                options={"maxiter": max_iter - iterations, "xatol": 1e-6,
                         "fatol": 1e-30,
                         "initial_simplex": np.array(simplex)},
            )
            iterations += int(res.nit)
            if res.fun < best_loss:
                best_x, best_loss = np.asarray(res.x), float(res.fun)
        message = ("targets not reached within tolerance "
                   f"(best loss {state['best'][0]:.3e}); possibly infeasible")
    except _Converged:
        # scipy does not report iterations on an early stop; evaluations
        # are the meaningful count there.
        iterations = state["evals"]
        converged = True
        message = "all relative residuals within tolerance"

    loss, params, rel, sim = state["best"]
    return CalibrationResult(
        params=params, converged=converged, iterations=iterations,
        evaluations=state["evals"] + 1, simulated=sim,
        residuals=(float(rel[0]), float(rel[1])), targets=targets, free=free,
        message=message, history=state["history"],
    )


def load_targets(path) -> CalibrationTargets:
    with Path(path).open() as f:
        d = json.load(f)
    d.pop("_meta", None)
    try:
        return CalibrationTargets(
            category=d["category"],
            deliveries_per_person_month=float(d["deliveries_per_person_month"]),
            monthly_value_per_household=float(d["monthly_value_per_household"]),
            tolerance=float(d.get("tolerance", 0.05)),
        )
    except KeyError as exc:
        raise ConfigError(f"targets file {path}: missing field {exc}") from None
