"""Command-line front end.

One binary with subcommands; JSON for structured config, CSV for tabular
output.  Flags override config-file values; every output file embeds a
header comment with the semantic config hash and the seed so runs can be
reproduced exactly.  Worker count and output paths do not enter the hash
(they cannot change results).
"""

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import engine, estimation, pipeline
from .calibration import (
    AggregateContext,
    CalibrationTargets,
    FreeParameter,
    calibrate,
    load_targets,
    simulate_aggregates,
)
from .defaults import (
    BUILTIN_SCENARIO_NAMES,
    DEFAULT_ADOPTION_RATES,
    DEFAULT_POPULATION_SPEC,
    builtin_scenario,
    reference_options,
)
from .errors import EcomDemandError, ConfigError
from .model import ChoiceModelParams, Scenario
from .population import (
    default_population,
    load_population,
    synthesize_population,
    write_population,
)
from .streams import substream

ENV_OUT_DIR = "ECOMDEMAND_OUT"


def _config_hash(semantic: dict) -> str:
    blob = json.dumps(semantic, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _header(semantic: dict, seed) -> str:
    return f"config_hash={_config_hash(semantic)} seed={seed if seed is not None else 'none'}"


def _load_config_file(path):
    if path is None:
        return {}
    with Path(path).open() as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must contain a JSON object")
    return data


def _resolve(args, config, key, default=None):
    """Flag value if given, else config-file value, else default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _out_dir(args, config) -> Path:
    out = _resolve(args, config, "out",
                   os.environ.get(ENV_OUT_DIR, "out"))
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_scenario(value) -> Scenario:
    if value in BUILTIN_SCENARIO_NAMES:
        return builtin_scenario(value)
    if value == "reference":
        return reference_options()
    path = Path(value)
    if not path.exists():
        raise ConfigError(
            f"scenario: {value!r} is neither a built-in name "
            f"({', '.join(BUILTIN_SCENARIO_NAMES)}, reference) nor a file")
    with path.open() as f:
        return Scenario.from_dict(json.load(f))


def _load_params(value) -> ChoiceModelParams:
    if value is None:
        return ChoiceModelParams()
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"params: file not found: {value}")
    with path.open() as f:
        d = json.load(f)
    d.pop("_meta", None)
    return ChoiceModelParams.from_dict(d)


def _load_population_arg(value):
    if value is None:
        return default_population()
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"population: file not found: {value}")
    return load_population(path)


def _write_json(path, payload: dict, semantic: dict, seed):
    payload = {"_meta": {"config_hash": _config_hash(semantic), "seed": seed},
               **payload}
    with Path(path).open("w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _common_run_semantics(args, config):
    scenario_names = _resolve(args, config, "scenario") or ["S1"]
    if isinstance(scenario_names, str):
        scenario_names = [scenario_names]
    mode = _resolve(args, config, "mode", "expectation")
    seed = _resolve(args, config, "seed")
    weeks = int(_resolve(args, config, "weeks", 1))
    if mode == "sample" and seed is None:
        raise ConfigError("seed: required when mode is 'sample'")
    population = _resolve(args, config, "population")
    params = _resolve(args, config, "params")
    semantic = {
        "command": args.command,
        "scenarios": list(scenario_names),
        "mode": mode,
        "seed": seed,
        "weeks": weeks,
        "population": population or "builtin-synthetic",
        "params": params or "builtin-defaults",
    }
    return scenario_names, mode, seed, weeks, population, params, semantic


def cmd_run(args) -> int:
    config = _load_config_file(args.config)
    names, mode, seed, weeks, pop_arg, params_arg, semantic = (
        _common_run_semantics(args, config))
    scenario = _load_scenario(names[0])
    params = _load_params(params_arg)
    population = _load_population_arg(pop_arg)
    workers = int(_resolve(args, config, "workers", 1))
    out = _out_dir(args, config)

    summary, results = engine.run_scenario(
        population, scenario, params, mode=mode, seed=seed,
        weeks=weeks, workers=workers)
    header = _header(semantic, seed)
    engine.write_summary_csv([summary], out / "summary.csv", header)
    engine.write_cdf_csv([summary], out / "cdf.csv", header)
    engine.write_households_csv({scenario.name: results},
                                out / "households.csv", header)
    print(engine.format_summary_table([summary]))
    print(f"outputs in {out}/ ({header})")
    return 0


def cmd_compare(args) -> int:
    config = _load_config_file(args.config)
    names, mode, seed, weeks, pop_arg, params_arg, semantic = (
        _common_run_semantics(args, config))
    if len(names) < 2:
        names = list(BUILTIN_SCENARIO_NAMES)
        semantic["scenarios"] = names
    scenarios = [_load_scenario(n) for n in names]
    params = _load_params(params_arg)
    population = _load_population_arg(pop_arg)
    workers = int(_resolve(args, config, "workers", 1))
    out = _out_dir(args, config)

    comparison = engine.compare_scenarios(
        population, scenarios, params, mode=mode, seed=seed,
        weeks=weeks, workers=workers)
    header = _header(semantic, seed)
    engine.write_summary_csv(comparison.summaries, out / "summary.csv", header)
    engine.write_cdf_csv(comparison.summaries, out / "cdf.csv", header)
    engine.write_deltas_csv(comparison, out / "deltas.csv", header)
    print(engine.format_summary_table(comparison.summaries))
    print(f"outputs in {out}/ ({header})")
    return 0


def cmd_calibrate(args) -> int:
    config = _load_config_file(args.config)
    category = _resolve(args, config, "category", "other-packages")
    targets_path = _resolve(args, config, "targets")
    tolerance = float(_resolve(args, config, "tolerance", 0.05))
    if targets_path is not None:
        targets = load_targets(targets_path)
    else:
        targets = CalibrationTargets.builtin(category, tolerance)
    free_names = _resolve(args, config, "free", "alpha")
    if isinstance(free_names, str):
        free_names = [n.strip() for n in free_names.split(",") if n.strip()]
    free = [FreeParameter(n) for n in free_names]
    scenario = _load_scenario(_resolve(args, config, "scenario") or "S1")
    params = _load_params(_resolve(args, config, "params"))
    population = _load_population_arg(_resolve(args, config, "population"))
    adoption = _resolve(args, config, "adoption-rate")
    if adoption is None:
        adoption = DEFAULT_ADOPTION_RATES.get(targets.category, 1.0)
    context = AggregateContext(adoption_rate=float(adoption))
    max_iter = int(_resolve(args, config, "max-iter", 500))

    semantic = {
        "command": "calibrate",
        "targets": targets.to_dict(),
        "free": free_names,
        "scenario": scenario.name,
        "adoption_rate": context.adoption_rate,
        "max_iter": max_iter,
    }
    out = _out_dir(args, config)
    result = calibrate(targets, free, population, scenario, params,
                       context, max_iter=max_iter)
    _write_json(out / "calibration.json", result.report_dict(), semantic, None)
    status = "converged" if result.converged else "NOT converged"
    print(f"calibration {status} after {result.iterations} iterations "
          f"({result.evaluations} evaluations)")
    for f, value in zip(free, (getattr(result.params, f.name) for f in free)):
        print(f"  {f.name} = {value:.6g}")
    print(f"  residuals: deliveries {result.residuals[0]:+.2%}, "
          f"value {result.residuals[1]:+.2%}")
    print(f"report: {out / 'calibration.json'}")
    return 0 if result.converged else 1


def cmd_fit(args) -> int:
    config = _load_config_file(args.config)
    scenario = _load_scenario(_resolve(args, config, "scenario") or "reference")
    n = int(_resolve(args, config, "simulate", 20000))
    seed = _resolve(args, config, "seed", 20240101)
    params = _load_params(_resolve(args, config, "params"))
    out = _out_dir(args, config)

    option_path = _resolve(args, config, "option-data")
    order_path = _resolve(args, config, "order-data")
    total_path = _resolve(args, config, "total-data")
    paths = (option_path, order_path, total_path)
    if any(paths) and not all(paths):
        raise ConfigError(
            "option-data/order-data/total-data: provide all three or none")

    semantic = {
        "command": "fit",
        "scenario": scenario.name,
        "simulate": None if all(paths) else n,
        "seed": seed,
        "datasets": [str(p) for p in paths if p],
    }
    header = _header(semantic, seed)

    if all(paths):
        option_data = estimation.read_option_data_csv(option_path)
        order_data = estimation.read_order_data_csv(order_path, scenario)
        total_data = estimation.read_total_data_csv(total_path, scenario)
    else:
        rng = substream(int(seed), "estimation-data")
        option_data = estimation.simulate_option_choice_data(n, rng, params)
        order_data = estimation.simulate_order_value_data(n, scenario, rng, params)
        total_data = estimation.simulate_total_value_data(n, scenario, rng, params)
        if _resolve(args, config, "write-data", False):
            estimation.write_option_data_csv(
                option_data, out / "option_choices.csv", header)
            estimation.write_order_data_csv(
                order_data, scenario, out / "order_value_choices.csv", header)
            estimation.write_total_data_csv(
                total_data, scenario, out / "total_value_choices.csv", header)

    result = estimation.fit_sequential(option_data, order_data, total_data,
                                       scenario, start=params)
    _write_json(out / "estimates.json", result.report_dict(), semantic, seed)
    for label, fit in (("delivery option", result.option_level.fit),
                       ("order value", result.order_level),
                       ("total value", result.total_level.fit)):
        print(f"{label:>15}: LL={fit.loglik:.1f} iterations={fit.iterations} "
              f"converged={fit.converged}")
    print(f"estimates: {out / 'estimates.json'}")
    return 0


def cmd_synthesize(args) -> int:
    config = _load_config_file(args.config)
    scenario = _load_scenario(_resolve(args, config, "scenario") or "S1")
    params = _load_params(_resolve(args, config, "params"))
    population = _load_population_arg(_resolve(args, config, "population"))
    weeks = int(_resolve(args, config, "weeks", 1))
    seed = _resolve(args, config, "seed")
    if seed is None:
        raise ConfigError("seed: required for synthesize")
    workers = int(_resolve(args, config, "workers", 1))
    categories_path = _resolve(args, config, "categories")
    if categories_path:
        with Path(categories_path).open() as f:
            configs = [pipeline.CategoryConfig.from_dict(d) for d in json.load(f)]
    else:
        configs = pipeline.default_category_configs()

    semantic = {
        "command": "synthesize",
        "scenario": scenario.name,
        "weeks": weeks,
        "seed": seed,
        "categories": [c.to_dict() for c in configs],
        "population": _resolve(args, config, "population") or "builtin-synthetic",
        "params": _resolve(args, config, "params") or "builtin-defaults",
    }
    out = _out_dir(args, config)
    packages = pipeline.run_pipeline(population, scenario, params, configs,
                                     weeks, int(seed), workers=workers)
    header = _header(semantic, seed)
    pipeline.write_packages_csv(packages, out / "packages.csv", header)
    by_cat = {}
    for p in packages:
        by_cat[p.category] = by_cat.get(p.category, 0) + 1
    total = sum(by_cat.values())
    print(f"{total} packages over {weeks} week(s) "
          f"({len(population.households)} households)")
    for cat in sorted(by_cat):
        print(f"  {cat}: {by_cat[cat]}")
    print(f"stream: {out / 'packages.csv'} ({header})")
    return 0


def cmd_gen_population(args) -> int:
    config = _load_config_file(args.config)
    count = int(_resolve(args, config, "count", DEFAULT_POPULATION_SPEC["count"]))
    seed = int(_resolve(args, config, "seed", DEFAULT_POPULATION_SPEC["seed"]))
    masses_path = _resolve(args, config, "masses")
    if masses_path:
        with Path(masses_path).open() as f:
            masses = {int(k): float(v) for k, v in json.load(f).items()}
    else:
        masses = DEFAULT_POPULATION_SPEC["masses"]
    semantic = {"command": "gen-population", "count": count, "seed": seed,
                "masses": {str(k): v for k, v in masses.items()}}
    out = _out_dir(args, config)
    population = synthesize_population(count, masses, seed)
    path = out / "population.csv"
    write_population(population, path, _header(semantic, seed))
    print(f"{len(population)} households -> {path}")
    return 0


def cmd_gen_scenario(args) -> int:
    scenario = _load_scenario(args.name)
    out = _out_dir(args, {})
    path = out / f"scenario_{scenario.name}.json"
    semantic = {"command": "gen-scenario", "name": scenario.name}
    _write_json(path, scenario.to_dict(), semantic, None)
    print(f"scenario {scenario.name} -> {path}")
    return 0


def cmd_gen_params(args) -> int:
    out = _out_dir(args, {})
    path = out / "params.json"
    semantic = {"command": "gen-params"}
    _write_json(path, ChoiceModelParams().to_dict(), semantic, None)
    print(f"default parameters -> {path}")
    return 0


def cmd_gen_targets(args) -> int:
    targets = CalibrationTargets.builtin(args.category)
    out = _out_dir(args, {})
    path = out / f"targets_{args.category}.json"
    semantic = {"command": "gen-targets", "category": args.category}
    _write_json(path, targets.to_dict(), semantic, None)
    print(f"targets for {args.category} -> {path}")
    return 0


def _add_common(p, with_mode=True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--population", help="population CSV (default: built-in "
                   "933-household synthetic population)")
    p.add_argument("--scenario", action="append",
                   help="built-in scenario name (S1..S4, reference) or JSON "
                   "file; repeatable (default: S1)")
    p.add_argument("--params", help="parameter JSON (default: built-in "
                   "reference parameter set)")
    if with_mode:
        p.add_argument("--mode", choices=["expectation", "sample"],
                       help="exact enumeration or Monte Carlo (default: expectation)")
        p.add_argument("--weeks", type=int,
                       help="sampled weeks per household in sample mode (default: 1)")
    p.add_argument("--seed", type=int, help="master seed (required for sampling)")
    p.add_argument("--workers", type=int,
                   help="parallel worker processes (default: 1; results are "
                   "identical for any worker count)")
    p.add_argument("--out", help=f"output directory (default: $"
                   f"{ENV_OUT_DIR} or ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecomdemand",
        description="Household e-commerce delivery demand simulator",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evaluate one scenario over a population")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several scenarios and tabulate deltas")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate",
                       help="fit free parameters to aggregate targets")
    _add_common(p, with_mode=False)
    p.add_argument("--targets", help="targets JSON (default: built-in "
                   "references for --category)")
    p.add_argument("--category", default=None,
                   help="item category for built-in targets "
                   "(default: other-packages)")
    p.add_argument("--free", help="comma list from alpha,beta_interval,"
                   "beta_storage (default: alpha)")
    p.add_argument("--tolerance", type=float,
                   help="relative residual tolerance (default: 0.05)")
    p.add_argument("--adoption-rate", type=float,
                   help="expected adopter share scaling the aggregates "
                   "(default: the category's adoption rate)")
    p.add_argument("--max-iter", type=int, help="simplex iteration cap "
                   "(default: 500)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fit", help="sequential maximum-likelihood estimation")
    _add_common(p, with_mode=False)
    p.add_argument("--simulate", type=int,
                   help="observations per level to simulate (default: 20000)")
    p.add_argument("--option-data", help="delivery-option choice CSV")
    p.add_argument("--order-data", help="order-value choice CSV")
    p.add_argument("--total-data", help="total-value choice CSV")
    p.add_argument("--write-data", action="store_const", const=True,
                   default=None, help="also write the simulated datasets")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synthesize",
                       help="sample adopters and emit the package stream")
    _add_common(p, with_mode=False)
    p.add_argument("--weeks", type=int, help="simulation horizon (default: 1)")
    p.add_argument("--categories", help="category config JSON "
                   "(default: built-in adoption rates "
                   f"{dict(DEFAULT_ADOPTION_RATES)})")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("gen-population", help="export a synthetic population CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--count", type=int, help="households (default: 933)")
    p.add_argument("--seed", type=int, help="generation seed (default: 7)")
    p.add_argument("--masses", help="JSON file of size->probability masses")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen_population)

    p = sub.add_parser("gen-scenario", help="export a built-in scenario JSON")
    p.add_argument("--name", required=True,
                   choices=list(BUILTIN_SCENARIO_NAMES) + ["reference"])
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("gen-params", help="export the default parameter JSON")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen_params)

    p = sub.add_parser("gen-targets", help="export built-in calibration targets")
    p.add_argument("--category", required=True,
                   choices=sorted(DEFAULT_ADOPTION_RATES))
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen_targets)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EcomDemandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
