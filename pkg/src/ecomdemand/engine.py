"""Population-level scenario runs, comparisons and CSV emission.

Expectation-mode runs are deterministic and independent of worker count:
each household is evaluated independently (optionally in a process pool)
and all aggregation happens in the main process in population order.
Sampled-mode runs draw per-household weeks from streams derived from
(master seed, household id), so they are equally scheduling-independent.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .model import (
    ChoiceModelParams,
    DemandResult,
    HouseholdProfile,
    Scenario,
    ScenarioTables,
    evaluate_household,
    resolve_params,
    sample_household_week,
)
from .population import Population
from .streams import substream

SPEED_ORDER = ("days-2-to-5", "one-day", "same-day")


@dataclass
class SummaryStats:
    """Population summary for one scenario run."""

    scenario: str
    n_households: int
    mode: str
    mean_total_value: float
    mean_order_frequency: float
    mean_order_value: float
    option_shares_pct: Dict[str, float]
    speed_shares_pct: Dict[str, float]
    tv_cdf: List[Tuple[float, float]] = field(repr=False, default_factory=list)
    freq_cdf: List[Tuple[float, float]] = field(repr=False, default_factory=list)


@dataclass
class ComparisonResult:
    summaries: List[SummaryStats]
    # (other, baseline) -> {"mean_total_value_pct": ..., "mean_order_frequency_pct": ...}
    deltas: Dict[Tuple[str, str], Dict[str, float]]


# Worker-process state for parallel household evaluation; initialized once
# per worker, results do not depend on how households are chunked.
_WORKER = {}


def _init_worker(scenario, params, mode, seed, weeks):
    _WORKER["tables"] = ScenarioTables(scenario, params)
    _WORKER["mode"] = mode
    _WORKER["seed"] = seed
    _WORKER["weeks"] = weeks


def _run_household(tables, household, mode, seed, weeks) -> DemandResult:
    if mode == "expectation":
        return evaluate_household(household, tables.scenario, tables.params,
                                  tables=tables)
    rng = substream(seed, household.id)
    p_tv, _ = tables.tv_choice(min(household.size, 20))
    tv_sum = ov_sum = 0.0
    orders = 0
    counts = {o.id: 0 for o in tables.scenario.options}
    for week in range(weeks):
        res, events = sample_household_week(
            household, tables.scenario, tables.params, rng,
            tables=tables, week=week, p_tv=p_tv)
        tv_sum += res.expected_tv
        ov_sum += res.expected_ov
        orders += res.orders
        for ev in events:
            counts[ev.option_id] += 1
    shares = ({k: v / orders for k, v in counts.items()} if orders
              else {k: 0.0 for k in counts})
    return DemandResult(
        household_id=household.id,
        mode="sampled",
        expected_tv=tv_sum / weeks,
        expected_frequency=orders / weeks,
        expected_ov=ov_sum / weeks,
        option_shares=shares,
        orders=orders,
    )


def _worker_eval(batch) -> List[DemandResult]:
    tables = _WORKER["tables"]
    return [
        _run_household(tables, h, _WORKER["mode"], _WORKER["seed"], _WORKER["weeks"])
        for h in batch
    ]


def _chunks(items, n):
    size = max(1, (len(items) + n - 1) // n)
    return [items[i:i + size] for i in range(0, len(items), size)]


def _cdf(values) -> List[Tuple[float, float]]:
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    return [(float(v[i]), (i + 1) / n) for i in range(n)]


def run_scenario(population: Population, scenario: Scenario,
                 params: Optional[ChoiceModelParams] = None,
                 mode: str = "expectation", seed: Optional[int] = None,
                 weeks: int = 1, workers: int = 1,
                 ) -> Tuple[SummaryStats, List[DemandResult]]:
    """Evaluate every household and aggregate to a scenario summary.

    Means are accumulated in population order; option shares are weighted
    by expected (or realized) order frequency, i.e. shares of orders.
    """
    if mode not in ("expectation", "sample"):
        raise ConfigError(f"mode must be 'expectation' or 'sample', got {mode!r}")
    if mode == "sample" and seed is None:
        raise ConfigError("sample mode requires a seed")
    if weeks < 1:
        raise ConfigError(f"weeks must be >= 1, got {weeks}")
    params = resolve_params(scenario, params)

    households = population.households
    if workers > 1 and len(households) > 1:
        batches = _chunks(households, workers * 4)
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker,
            initargs=(scenario, params, mode, seed, weeks),
        ) as pool:
            results = [r for batch in pool.map(_worker_eval, batches) for r in batch]
    else:
        tables = ScenarioTables(scenario, params)
        results = [_run_household(tables, h, mode, seed, weeks) for h in households]

    n = len(results)
    tv_sum = freq_sum = ov_sum = 0.0
    option_orders = {o.id: 0.0 for o in scenario.options}
    for r in results:
        tv_sum += r.expected_tv
        freq_sum += r.expected_frequency
        ov_sum += r.expected_ov
        for oid, share in r.option_shares.items():
            option_orders[oid] += share * r.expected_frequency

    total_orders = sum(option_orders.values())
    if total_orders > 0:
        option_shares = {k: 100.0 * v / total_orders for k, v in option_orders.items()}
    else:
        option_shares = {k: 0.0 for k in option_orders}
    speed_shares = {s: 0.0 for s in SPEED_ORDER}
    for o in scenario.options:
        speed_shares[o.speed] = speed_shares.get(o.speed, 0.0) + option_shares[o.id]

    summary = SummaryStats(
        scenario=scenario.name,
        n_households=n,
        mode=mode,
        mean_total_value=tv_sum / n,
        mean_order_frequency=freq_sum / n,
        mean_order_value=ov_sum / n,
        option_shares_pct=option_shares,
        speed_shares_pct=speed_shares,
        tv_cdf=_cdf([r.expected_tv for r in results]),
        freq_cdf=_cdf([r.expected_frequency for r in results]),
    )
    return summary, results


def compare_scenarios(population: Population, scenarios: List[Scenario],
                      params: Optional[ChoiceModelParams] = None,
                      mode: str = "expectation", seed: Optional[int] = None,
                      weeks: int = 1, workers: int = 1) -> ComparisonResult:
    """Run several scenarios on one population and tabulate pairwise deltas."""
    if len(scenarios) < 2:
        raise ConfigError("compare needs at least two scenarios")
    summaries = [
        run_scenario(population, sc, params, mode=mode, seed=seed,
                     weeks=weeks, workers=workers)[0]
        for sc in scenarios
    ]
    deltas = {}
    for base in summaries:
        for other in summaries:
            if other is base:
                continue
            deltas[(other.scenario, base.scenario)] = {
                "mean_total_value_pct": 100.0 * (
                    other.mean_total_value / base.mean_total_value - 1.0),
                "mean_order_frequency_pct": 100.0 * (
                    other.mean_order_frequency / base.mean_order_frequency - 1.0),
            }
    return ComparisonResult(summaries=summaries, deltas=deltas)


def format_summary_table(summaries: List[SummaryStats]) -> str:
    """Fixed-width console table: means plus delivery-speed shares."""
    head = (f"{'scenario':<10} {'mean_tv':>8} {'mean_freq':>9} "
            f"{'2-5d %':>7} {'1d %':>6} {'same-day %':>10}")
    lines = [head, "-" * len(head)]
    for s in summaries:
        lines.append(
            f"{s.scenario:<10} {s.mean_total_value:>8.1f} "
            f"{s.mean_order_frequency:>9.3f} "
            f"{s.speed_shares_pct.get('days-2-to-5', 0.0):>7.1f} "
            f"{s.speed_shares_pct.get('one-day', 0.0):>6.1f} "
            f"{s.speed_shares_pct.get('same-day', 0.0):>10.1f}"
        )
    return "\n".join(lines)


def _open_csv(path, header_comment):
    f = Path(path).open("w", newline="")
    if header_comment:
        f.write(f"# {header_comment}\n")
    return f


def write_summary_csv(summaries: List[SummaryStats], path, header_comment=None):
    with _open_csv(path, header_comment) as f:
        w = csv.writer(f)
        w.writerow([
            "scenario", "n_households", "mode", "mean_total_value",
            "mean_order_frequency", "mean_order_value",
            "share_days_2_to_5_pct", "share_one_day_pct", "share_same_day_pct",
        ])
        for s in summaries:
            w.writerow([
                s.scenario, s.n_households, s.mode,
                repr(s.mean_total_value), repr(s.mean_order_frequency),
                repr(s.mean_order_value),
                repr(s.speed_shares_pct.get("days-2-to-5", 0.0)),
                repr(s.speed_shares_pct.get("one-day", 0.0)),
                repr(s.speed_shares_pct.get("same-day", 0.0)),
            ])


def write_cdf_csv(summaries: List[SummaryStats], path, header_comment=None):
    with _open_csv(path, header_comment) as f:
        w = csv.writer(f)
        w.writerow(["scenario", "metric", "value", "cum_prob"])
        for s in summaries:
            for value, p in s.tv_cdf:
                w.writerow([s.scenario, "total_value", repr(value), repr(p)])
            for value, p in s.freq_cdf:
                w.writerow([s.scenario, "order_frequency", repr(value), repr(p)])


def write_households_csv(results_by_scenario: Dict[str, List[DemandResult]],
                         path, header_comment=None):
    with _open_csv(path, header_comment) as f:
        w = csv.writer(f)
        option_ids = sorted({
            oid for results in results_by_scenario.values()
            for r in results for oid in r.option_shares
        })
        w.writerow(["scenario", "household_id", "mode", "expected_tv",
                    "expected_frequency", "expected_ov", "grid_saturated"]
                   + [f"share_{oid}" for oid in option_ids])
        for name, results in results_by_scenario.items():
            for r in results:
                w.writerow([name, r.household_id, r.mode, repr(r.expected_tv),
                            repr(r.expected_frequency), repr(r.expected_ov),
                            int(r.grid_saturated)]
                           + [repr(r.option_shares.get(oid, 0.0))
                              for oid in option_ids])


def write_deltas_csv(comparison: ComparisonResult, path, header_comment=None):
    with _open_csv(path, header_comment) as f:
        w = csv.writer(f)
        w.writerow(["scenario", "baseline", "mean_total_value_pct",
                    "mean_order_frequency_pct"])
        for (other, base), d in sorted(comparison.deltas.items()):
            w.writerow([other, base,
                        repr(d["mean_total_value_pct"]),
                        repr(d["mean_order_frequency_pct"])])
