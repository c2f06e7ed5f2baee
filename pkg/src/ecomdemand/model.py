"""Household e-commerce demand model.

Three nested choice levels, evaluated jointly for one household:

  total value per week  ->  order value per transaction  ->  delivery option

Each level is a multinomial logit over a finite grid; the expected utility
of the lower level enters the level above through its logsum.  Delivery
fees depend on the order value through per-option fee schedules, which is
what makes demand sensitive to free-shipping policies.

``ScenarioTables`` precomputes everything that does not depend on the
household (option choice per fee segment, the full order-value table), so
per-household evaluation is a single softmax over the total-value grid.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import kernels
from .errors import InvalidInputError, ScenarioError

SPEED_LEVELS = ("same-day", "one-day", "days-2-to-5")
SLOT_LEVELS = ("none", "2hr", "4hr")
TIME_LEVELS = ("daytime", "daytime-and-evening")
DATE_LEVELS = ("weekday", "weekday-and-saturday", "all-days")

# Monday=0 .. Sunday=6; admissible requested days per date category.
DATE_CATEGORY_DAYS = {
    "weekday": (0, 1, 2, 3, 4),
    "weekday-and-saturday": (0, 1, 2, 3, 4, 5),
    "all-days": (0, 1, 2, 3, 4, 5, 6),
}

# Above this size the quadratic purchase-need term pushes the total-value
# distribution against the grid ceiling; evaluation caps and warns.
MAX_HOUSEHOLD_SIZE = 20

# Mass at the last total-value grid point above which a result is flagged
# as grid-saturated.
GRID_SATURATION_MASS = 1e-3


@dataclass(frozen=True)
class FeeSchedule:
    """Piecewise-constant delivery fee by order value.

    Brackets are (lower, upper, fee) with lower-inclusive / upper-exclusive
    bounds, partitioning [0, inf): the first lower bound is 0, consecutive
    brackets are contiguous, and the last upper bound is infinite.
    """

    brackets: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.brackets:
            raise InvalidInputError("fee schedule needs at least one bracket")
        lo0 = self.brackets[0][0]
        if lo0 != 0.0:
            raise InvalidInputError(f"first bracket must start at 0, got {lo0}")
        prev_hi = None
        for lo, hi, fee in self.brackets:
            if not (hi > lo):
                raise InvalidInputError(f"empty bracket [{lo}, {hi})")
            if prev_hi is not None and lo != prev_hi:
                raise InvalidInputError(
                    f"brackets must be contiguous: gap between {prev_hi} and {lo}"
                )
            if not (math.isfinite(fee) and fee >= 0.0):
                raise InvalidInputError(f"fee must be finite and >= 0, got {fee}")
            prev_hi = hi
        if not math.isinf(self.brackets[-1][1]):
            raise InvalidInputError("last bracket must be open-ended")

    @classmethod
    def from_breaks(cls, breaks, fees) -> "FeeSchedule":
        """Build from ascending lower bounds (first must be 0) and fees."""
        if len(breaks) != len(fees):
            raise InvalidInputError("breaks and fees must have equal length")
        uppers = list(breaks[1:]) + [math.inf]
        return cls(tuple((float(lo), float(hi), float(f))
                         for lo, hi, f in zip(breaks, uppers, fees)))

    def fee_at(self, ov: float) -> float:
        if ov < 0:
            raise InvalidInputError(f"order value must be >= 0, got {ov}")
        for lo, hi, fee in self.brackets:
            if lo <= ov < hi:
                return fee
        raise AssertionError("unreachable: brackets partition [0, inf)")

    def to_dict(self) -> dict:
        return {
            "breaks": [b[0] for b in self.brackets],
            "fees": [b[2] for b in self.brackets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeeSchedule":
        return cls.from_breaks(d["breaks"], d["fees"])


@dataclass(frozen=True)
class DeliveryOptionSpec:
    """One delivery alternative: categorical attributes plus fee schedule."""

    id: str
    speed: str
    slot: str
    time: str
    date: str
    fees: FeeSchedule

    def __post_init__(self):
        for value, levels, name in (
            (self.speed, SPEED_LEVELS, "speed"),
            (self.slot, SLOT_LEVELS, "slot"),
            (self.time, TIME_LEVELS, "time"),
            (self.date, DATE_LEVELS, "date"),
        ):
            if value not in levels:
                raise InvalidInputError(
                    f"option {self.id!r}: {name}={value!r} not in {levels}"
                )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "speed": self.speed,
            "slot": self.slot,
            "time": self.time,
            "date": self.date,
            "fees": self.fees.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeliveryOptionSpec":
        return cls(
            id=d["id"],
            speed=d["speed"],
            slot=d["slot"],
            time=d["time"],
            date=d["date"],
            fees=FeeSchedule.from_dict(d["fees"]),
        )


def _default_beta_speed():
    return {"same-day": 0.177, "one-day": 0.082, "days-2-to-5": -0.259}


def _default_beta_slot():
    return {"none": -0.157, "2hr": 0.113, "4hr": 0.040}


def _default_beta_time():
    return {"daytime": -0.090, "daytime-and-evening": 0.090}


def _default_beta_date():
    return {"weekday": -0.063, "weekday-and-saturday": 0.054, "all-days": 0.009}


@dataclass
class ChoiceModelParams:
    """All model coefficients; defaults are the assumed reference set.

    Part-worth dicts are keyed by attribute level.  ``beta_fee`` applies to
    ln(fee + 1) with the fee in US$; ``alpha`` is the per-household-member
    weekly purchase need in US$.
    """

    beta_speed: Dict[str, float] = field(default_factory=_default_beta_speed)
    beta_slot: Dict[str, float] = field(default_factory=_default_beta_slot)
    beta_time: Dict[str, float] = field(default_factory=_default_beta_time)
    beta_date: Dict[str, float] = field(default_factory=_default_beta_date)
    beta_fee: float = -1.377
    beta_logsumdo: float = 1.05
    beta_interval: float = -0.111
    beta_storage: float = -0.0183
    beta_logsumov: float = 0.0597
    beta_hhs: float = -0.000175
    alpha: float = 12.3

    def __post_init__(self):
        for levels, d, name in (
            (SPEED_LEVELS, self.beta_speed, "beta_speed"),
            (SLOT_LEVELS, self.beta_slot, "beta_slot"),
            (TIME_LEVELS, self.beta_time, "beta_time"),
            (DATE_LEVELS, self.beta_date, "beta_date"),
        ):
            if set(d) != set(levels):
                raise InvalidInputError(
                    f"{name} must have exactly the levels {levels}, got {sorted(d)}"
                )
            for k, v in d.items():
                if not math.isfinite(v):
                    raise InvalidInputError(f"{name}[{k}] is not finite")
        for name in ("beta_fee", "beta_logsumdo", "beta_interval",
                     "beta_storage", "beta_logsumov", "beta_hhs", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} is not finite")

    def with_overrides(self, overrides: Dict[str, float]) -> "ChoiceModelParams":
        """New params with scalar coefficients replaced (part-worths via dicts)."""
        return replace(self, **overrides)

    def to_dict(self) -> dict:
        return {
            "beta_speed": dict(self.beta_speed),
            "beta_slot": dict(self.beta_slot),
            "beta_time": dict(self.beta_time),
            "beta_date": dict(self.beta_date),
            "beta_fee": self.beta_fee,
            "beta_logsumdo": self.beta_logsumdo,
            "beta_interval": self.beta_interval,
            "beta_storage": self.beta_storage,
            "beta_logsumov": self.beta_logsumov,
            "beta_hhs": self.beta_hhs,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChoiceModelParams":
        base = cls().to_dict()
        unknown = set(d) - set(base)
        if unknown:
            raise InvalidInputError(f"unknown parameter fields: {sorted(unknown)}")
        base.update(d)
        return cls(**base)


@dataclass(frozen=True)
class HouseholdProfile:
    """A decision-making household; size in persons."""

    id: str
    size: int

    def __post_init__(self):
        if not (isinstance(self.size, int) and self.size >= 1):
            raise InvalidInputError(
                f"household {self.id!r}: size must be an integer >= 1, got {self.size}"
            )


def _grid(lo: int, hi: int) -> np.ndarray:
    return np.arange(lo, hi + 1, dtype=np.int64)


@dataclass
class Scenario:
    """A named bundle of delivery options, grids and optional parameters."""

    name: str
    options: List[DeliveryOptionSpec]
    params: Optional[ChoiceModelParams] = None
    ov_grid: np.ndarray = field(default_factory=lambda: _grid(10, 300))
    tv_grid: np.ndarray = field(default_factory=lambda: _grid(1, 600))
    description: str = ""

    def __post_init__(self):
        if not self.options:
            raise ScenarioError(f"scenario {self.name!r} has no delivery options")
        ids = [o.id for o in self.options]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"scenario {self.name!r} has duplicate option ids")
        self.ov_grid = np.asarray(self.ov_grid, dtype=np.int64)
        self.tv_grid = np.asarray(self.tv_grid, dtype=np.int64)
        for grid, label, minval in ((self.ov_grid, "ov_grid", 1),
                                    (self.tv_grid, "tv_grid", 1)):
            if grid.size == 0:
                raise ScenarioError(f"scenario {self.name!r}: {label} is empty")
            if np.any(np.diff(grid) <= 0):
                raise ScenarioError(
                    f"scenario {self.name!r}: {label} must be strictly increasing"
                )
            if grid[0] < minval:
                raise ScenarioError(
                    f"scenario {self.name!r}: {label} values must be >= {minval}"
                )

    def option_ids(self) -> List[str]:
        return [o.id for o in self.options]

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "description": self.description,
            "options": [o.to_dict() for o in self.options],
            "ov_grid": {"min": int(self.ov_grid[0]), "max": int(self.ov_grid[-1])},
            "tv_grid": {"min": int(self.tv_grid[0]), "max": int(self.tv_grid[-1])},
        }
        if self.params is not None:
            d["params"] = self.params.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        kwargs = {
            "name": d["name"],
            "description": d.get("description", ""),
            "options": [DeliveryOptionSpec.from_dict(o) for o in d["options"]],
        }
        for key in ("ov_grid", "tv_grid"):
            if key in d:
                g = d[key]
                if isinstance(g, dict):
                    kwargs[key] = _grid(int(g["min"]), int(g["max"]))
                else:
                    kwargs[key] = np.asarray(g, dtype=np.int64)
        if "params" in d and d["params"] is not None:
            kwargs["params"] = ChoiceModelParams.from_dict(d["params"])
        return cls(**kwargs)


def resolve_params(scenario: Scenario,
                   params: Optional[ChoiceModelParams]) -> ChoiceModelParams:
    """Explicit params win over scenario-attached ones, else defaults."""
    if params is not None:
        return params
    if scenario.params is not None:
        return scenario.params
    return ChoiceModelParams()


def fee_for(option: DeliveryOptionSpec, ov: float) -> float:
    """Delivery fee of ``option`` at order value ``ov`` (US$)."""
    return option.fees.fee_at(ov)


def _utility_at_fee(option: DeliveryOptionSpec, fee: float,
                    params: ChoiceModelParams) -> float:
    return (
        params.beta_speed[option.speed]
        + params.beta_slot[option.slot]
        + params.beta_time[option.time]
        + params.beta_date[option.date]
        + params.beta_fee * math.log(fee + 1.0)
    )


def option_utility(option: DeliveryOptionSpec, ov: float,
                   params: ChoiceModelParams) -> float:
    """Systematic utility of a delivery option at order value ``ov``."""
    return _utility_at_fee(option, fee_for(option, ov), params)


def option_choice(scenario: Scenario, ov: float, params: ChoiceModelParams
                  ) -> Tuple[np.ndarray, np.ndarray, float]:
    """Utilities, choice probabilities and logsum of the option set at ``ov``."""
    if not scenario.options:
        raise ScenarioError("empty option set")
    utils = np.array(
        [option_utility(o, ov, params) for o in scenario.options],
        dtype=np.float64,
    )
    probs = np.empty_like(utils)
    ls = kernels.softmax(utils, probs)
    return utils, probs, ls


def order_value_utility(ov: float, tv: float, scenario: Scenario,
                        params: ChoiceModelParams) -> float:
    """Systematic utility of order value ``ov`` given total value ``tv``."""
    if ov <= 0 or tv <= 0:
        raise InvalidInputError("order and total value must be positive")
    _, _, l1 = option_choice(scenario, ov, params)
    ratio = tv / ov
    rev = ov / tv
    return (params.beta_logsumdo * ratio * l1
            + params.beta_interval * (rev * rev)
            + params.beta_storage * ov)


@dataclass
class DemandResult:
    """Per-household demand outcome.

    In expectation mode the fields are exact expectations under the joint
    (tv, ov, option) distribution and ``option_shares`` is order-frequency
    weighted.  In sampled mode they are single-realization values (shares
    are all zero for a week with no orders).
    """

    household_id: str
    mode: str
    expected_tv: float
    expected_frequency: float
    expected_ov: float
    option_shares: Dict[str, float]
    tv_distribution: Optional[np.ndarray] = None
    grid_saturated: bool = False
    orders: Optional[int] = None


@dataclass(frozen=True)
class OrderEvent:
    """One sampled order: value in US$ and the chosen delivery option."""

    household_id: str
    week: int
    seq: int
    order_value: int
    option_id: str
    speed: str


class ScenarioTables:
    """Household-independent tables for one (scenario, params) pair.

    Grid order values are grouped into fee segments (runs of identical
    per-option fee vectors), the option choice is solved once per segment,
    and the full order-value table is built by the kernel backend.  A full
    600 x 291 build takes a few milliseconds compiled.
    """

    def __init__(self, scenario: Scenario, params: Optional[ChoiceModelParams] = None):
        self.scenario = scenario
        self.params = resolve_params(scenario, params)
        p = self.params

        self.ov = np.ascontiguousarray(scenario.ov_grid, dtype=np.float64)
        self.tv = np.ascontiguousarray(scenario.tv_grid, dtype=np.float64)
        nov, ntv = self.ov.size, self.tv.size
        nopt = len(scenario.options)

        # Fee segments: consecutive grid order values share a segment iff
        # every option charges the same fee.
        seg = np.empty(nov, dtype=np.int64)
        profiles: List[Tuple[float, ...]] = []
        index: Dict[Tuple[float, ...], int] = {}
        for j in range(nov):
            prof = tuple(fee_for(o, float(self.ov[j])) for o in scenario.options)
            k = index.get(prof)
            if k is None:
                k = len(profiles)
                index[prof] = k
                profiles.append(prof)
            seg[j] = k
        self.seg = seg
        self.fee_profiles = profiles
        nseg = len(profiles)

        self.opt_utils = np.empty((nseg, nopt), dtype=np.float64)
        self.opt_probs = np.empty((nseg, nopt), dtype=np.float64)
        self.opt_logsum = np.empty(nseg, dtype=np.float64)
        for k, prof in enumerate(profiles):
            for i, option in enumerate(scenario.options):
                self.opt_utils[k, i] = _utility_at_fee(option, prof[i], p)
            self.opt_logsum[k] = kernels.softmax(self.opt_utils[k], self.opt_probs[k])
        self.opt_cum = np.cumsum(self.opt_probs, axis=1)

        self.l1_per_ov = np.ascontiguousarray(self.opt_logsum[seg])

        self.ov_logsum = np.empty(ntv, dtype=np.float64)
        self.cond = np.empty((ntv, nov), dtype=np.float64)
        self.rate = np.empty(ntv, dtype=np.float64)
        self.meanov = np.empty(ntv, dtype=np.float64)
        self.segrate = np.empty((ntv, nseg), dtype=np.float64)
        kernels.order_value_tables(
            self.l1_per_ov, self.ov, self.tv, seg, nseg,
            p.beta_logsumdo, p.beta_interval, p.beta_storage,
            self.ov_logsum, self.cond, self.rate, self.meanov, self.segrate,
        )

        self._cond_cum: Dict[int, np.ndarray] = {}

    def cond_cum(self, tv_index: int) -> np.ndarray:
        """Cumulative P(ov | tv) row, cached per total-value index."""
        row = self._cond_cum.get(tv_index)
        if row is None:
            row = np.cumsum(self.cond[tv_index])
            self._cond_cum[tv_index] = row
        return row

    def tv_choice(self, household_size: int) -> Tuple[np.ndarray, float]:
        """Total-value probabilities and logsum for a household size."""
        p = self.params
        need = p.alpha * float(household_size)
        utils = np.empty(self.tv.size, dtype=np.float64)
        kernels.tv_utilities(self.ov_logsum, self.tv, p.beta_logsumov,
                             p.beta_hhs, need, utils)
        probs = np.empty_like(utils)
        ls = kernels.softmax(utils, probs)
        return probs, ls


def total_value_utility(tv: float, household: HouseholdProfile,
                        scenario: Scenario,
                        params: Optional[ChoiceModelParams] = None,
                        tables: Optional[ScenarioTables] = None) -> float:
    """Systematic utility of weekly total value ``tv`` for a household."""
    if tables is None:
        tables = ScenarioTables(scenario, params)
    p = tables.params
    idx = int(np.searchsorted(tables.scenario.tv_grid, tv))
    if idx >= tables.tv.size or tables.scenario.tv_grid[idx] != tv:
        raise InvalidInputError(f"tv={tv} is not on the total-value grid")
    size = _effective_size(household)
    d = p.alpha * float(size) - tables.tv[idx]
    return p.beta_logsumov * tables.ov_logsum[idx] + p.beta_hhs * (d * d)


def _effective_size(household: HouseholdProfile) -> int:
    if household.size > MAX_HOUSEHOLD_SIZE:
        warnings.warn(
            f"household {household.id!r} size {household.size} capped at "
            f"{MAX_HOUSEHOLD_SIZE}; the need term would otherwise force the "
            f"total-value distribution against the grid ceiling",
            stacklevel=3,
        )
        return MAX_HOUSEHOLD_SIZE
    return household.size


def _option_order_numerators(tables: ScenarioTables, p_tv: np.ndarray) -> List[float]:
    """Expected orders per option: sum over tv, ov of P(tv)P(ov|tv)(tv/ov)P(do|ov)."""
    nseg = len(tables.fee_profiles)
    segnum = np.empty(nseg, dtype=np.float64)
    kernels.weighted_colsum(p_tv, tables.segrate, segnum)
    nums = []
    for i in range(len(tables.scenario.options)):
        acc = 0.0
        for k in range(nseg):
            acc += segnum[k] * tables.opt_probs[k, i]
        nums.append(acc)
    return nums


def evaluate_household(household: HouseholdProfile, scenario: Scenario,
                       params: Optional[ChoiceModelParams] = None,
                       tables: Optional[ScenarioTables] = None) -> DemandResult:
    """Exact expectation-mode evaluation of one household.

    Enumerates the joint (tv, ov, option) distribution through the
    precomputed tables and returns exact expectations; deterministic.
    """
    if tables is None:
        tables = ScenarioTables(scenario, params)
    size = _effective_size(household)
    p_tv, _ = tables.tv_choice(size)

    e_tv = kernels.dot(p_tv, tables.tv)
    e_freq = kernels.dot(p_tv, tables.rate)
    e_ov = kernels.dot(p_tv, tables.meanov)
    nums = _option_order_numerators(tables, p_tv)
    shares = {
        o.id: nums[i] / e_freq for i, o in enumerate(tables.scenario.options)
    }
    return DemandResult(
        household_id=household.id,
        mode="expectation",
        expected_tv=e_tv,
        expected_frequency=e_freq,
        expected_ov=e_ov,
        option_shares=shares,
        tv_distribution=p_tv,
        grid_saturated=bool(p_tv[-1] > GRID_SATURATION_MASS),
    )


def sample_household_week(household: HouseholdProfile, scenario: Scenario,
                          params: Optional[ChoiceModelParams],
                          rng: np.random.Generator,
                          tables: Optional[ScenarioTables] = None,
                          week: int = 0,
                          p_tv: Optional[np.ndarray] = None,
                          ) -> Tuple[DemandResult, List[OrderEvent]]:
    """Monte Carlo realization of one household-week.

    Draws tv ~ P(tv), ov ~ P(ov|tv), an order count N ~ Poisson(tv/ov) and
    N independent option choices; deterministic given the generator state.
    ``p_tv`` short-circuits the total-value distribution when the caller
    evaluates many weeks for the same household.
    """
    if tables is None:
        tables = ScenarioTables(scenario, params)
    if p_tv is None:
        p_tv, _ = tables.tv_choice(_effective_size(household))

    cum_tv = np.cumsum(p_tv)
    t_idx = kernels.choose(cum_tv, rng.random())
    o_idx = kernels.choose(tables.cond_cum(t_idx), rng.random())
    tv_val = int(tables.scenario.tv_grid[t_idx])
    ov_val = int(tables.scenario.ov_grid[o_idx])

    n_orders = int(rng.poisson(tv_val / ov_val))
    seg = int(tables.seg[o_idx])
    opt_cum = tables.opt_cum[seg]
    options = tables.scenario.options

    events = []
    counts = [0] * len(options)
    for seq in range(n_orders):
        i = kernels.choose(opt_cum, rng.random())
        counts[i] += 1
        events.append(OrderEvent(
            household_id=household.id,
            week=week,
            seq=seq,
            order_value=ov_val,
            option_id=options[i].id,
            speed=options[i].speed,
        ))

    if n_orders > 0:
        shares = {o.id: counts[i] / n_orders for i, o in enumerate(options)}
    else:
        shares = {o.id: 0.0 for o in options}
    result = DemandResult(
        household_id=household.id,
        mode="sampled",
        expected_tv=float(tv_val),
        expected_frequency=float(n_orders),
        expected_ov=float(ov_val),
        option_shares=shares,
        orders=n_orders,
    )
    return result, events
