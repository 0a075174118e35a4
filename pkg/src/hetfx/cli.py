"""Command-line front end.

Three subcommands:

* ``replicate`` -- run the full three-scenario simulation study and
  write the method-comparison table, the subgroup table, figure data,
  figures, and a machine-readable summary.
* ``simulate``  -- run a single scenario, optionally dumping the
  generated data and ground truth.
* ``fit``       -- estimate effects on a user-supplied CSV.

Exit codes: 0 success, 2 usage/config error, 3 runtime failure.
Config precedence: command-line flags > --config JSON > built-in
defaults; the effective configuration is echoed into summary.json.
All randomness flows from --seed; outputs are written atomically and
reruns are byte-identical for a fixed seed at any thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dgp, evaluation, figures, forest, interaction, metalearners
from .data import (
    CateEstimates,
    Dataset,
    read_dataset_csv,
    write_dataset_csv,
    write_estimates_csv,
    write_ground_truth_csv,
    write_json,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ALL_METHODS = ("ols", "causal_forest", "s", "t", "x", "r", "dr")
DEFAULT_METHODS = ("ols", "causal_forest")
DEFAULT_N = 2000
DEFAULT_TREES = 2000
DEFAULT_FOLDS = 5
DEFAULT_SEED = 0

SCENARIO_ORDER = (dgp.Scenario.LINEAR, dgp.Scenario.COMPLEX_NONLINEAR, dgp.Scenario.CONSTANT)


class ConfigError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


@dataclass
class RunConfig:
    command: str
    out: str
    seed: int = DEFAULT_SEED
    n: int = DEFAULT_N
    scenario: str | None = None
    methods: tuple[str, ...] = DEFAULT_METHODS
    trees: int = DEFAULT_TREES
    folds: int = DEFAULT_FOLDS
    threads: int = 1
    dump_data: bool = False
    data: str | None = None
    treatment: str | None = None
    outcome: str | None = None
    covariates: tuple[str, ...] | None = None

    def as_dict(self) -> dict:
        payload = asdict(self)
        payload["methods"] = list(self.methods)
        if self.covariates is not None:
            payload["covariates"] = list(self.covariates)
        return payload


def _parse_methods(raw) -> tuple[str, ...]:
    if isinstance(raw, str):
        parts = [part.strip() for part in raw.split(",") if part.strip()]
    else:
        parts = list(raw)
    if not parts:
        raise ConfigError("methods must be a nonempty list")
    unknown = [m for m in parts if m not in ALL_METHODS]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; choose from {list(ALL_METHODS)}")
    seen: list[str] = []
    for m in parts:
        if m not in seen:
            seen.append(m)
    return tuple(seen)


def _parse_names(raw) -> tuple[str, ...]:
    if isinstance(raw, str):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return tuple(raw)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetfx",
        description="Heterogeneous treatment effect estimation: simulate, replicate, fit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
        p.add_argument("--methods", help="comma-separated subset of " + ",".join(ALL_METHODS))
        p.add_argument("--trees", type=int, help=f"causal forest size (default {DEFAULT_TREES})")
        p.add_argument("--folds", type=int, help=f"cross-fitting folds (default {DEFAULT_FOLDS})")
        p.add_argument("--threads", type=int, help="worker threads for forest growth (default 1)")
        p.add_argument("--config", help="JSON file with defaults for any flag")

    rep = sub.add_parser("replicate", help="run all three simulation scenarios and write tables")
    common(rep)
    rep.add_argument("--n", type=int, help=f"units per scenario (default {DEFAULT_N})")
    rep.add_argument("--dump-data", action="store_true", default=None,
                     help="also write dataset.csv and ground_truth.csv per scenario")

    sim = sub.add_parser("simulate", help="run one simulation scenario")
    common(sim)
    sim.add_argument("--scenario", help="linear | complex_nonlinear | constant")
    sim.add_argument("--n", type=int, help=f"units (default {DEFAULT_N})")
    sim.add_argument("--dump-data", action="store_true", default=None,
                     help="also write dataset.csv and ground_truth.csv")

    fit = sub.add_parser("fit", help="estimate effects on a user-supplied CSV")
    common(fit)
    fit.add_argument("--data", help="input CSV path (header required)")
    fit.add_argument("--treatment", help="treatment column name (binary 0/1)")
    fit.add_argument("--outcome", help="outcome column name (numeric)")
    fit.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    file_config: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as handle:
                file_config = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}")
        if not isinstance(file_config, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")

    def pick(name: str, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in file_config:
            return file_config[name]
        return default

    methods = pick("methods", None)
    config = RunConfig(
        command=args.command,
        out=pick("out", None),
        seed=int(pick("seed", DEFAULT_SEED)),
        n=int(pick("n", DEFAULT_N)),
        scenario=pick("scenario", None),
        methods=_parse_methods(methods) if methods is not None else DEFAULT_METHODS,
        trees=int(pick("trees", DEFAULT_TREES)),
        folds=int(pick("folds", DEFAULT_FOLDS)),
        threads=int(pick("threads", 1)),
        dump_data=bool(pick("dump_data", False)),
        data=pick("data", None),
        treatment=pick("treatment", None),
        outcome=pick("outcome", None),
        covariates=None,
    )
    raw_covariates = pick("covariates", None)
    if raw_covariates is not None:
        config.covariates = _parse_names(raw_covariates)
    if not config.out:
        raise ConfigError("--out is required")
    if config.trees < 1:
        raise ConfigError("--trees must be positive")
    if config.threads < 1:
        raise ConfigError("--threads must be positive")
    if config.n < 2:
        raise ConfigError("--n must be at least 2")
    if config.command == "simulate" and not config.scenario:
        raise ConfigError("simulate requires --scenario")
    if config.command == "fit":
        if not config.data:
            raise ConfigError("fit requires --data")
        if not config.treatment or not config.outcome:
            raise ConfigError("fit requires --treatment and --outcome column names")
    return config


# ---------------------------------------------------------------------------
# Estimation driver
# ---------------------------------------------------------------------------


def _method_seed(seed: int, method: str) -> int:
    return int(
        np.random.SeedSequence(seed, spawn_key=(100 + ALL_METHODS.index(method),)).generate_state(
            1, np.uint64
        )[0]
    )


def _run_methods(dataset: Dataset, config: RunConfig):
    """Fit every requested method; returns (estimates list, forest model or None)."""
    estimates: list[CateEstimates] = []
    forest_model = None
    plan = None
    for method in config.methods:
        seed = _method_seed(config.seed, method)
        if method == "ols":
            estimates.append(interaction.estimate_cate(dataset))
        elif method == "causal_forest":
            params = forest.ForestParams(
                num_trees=config.trees,
                num_folds_nuisance=config.folds,
                seed=seed,
            )
            forest_model = forest.grow(dataset, params, threads=config.threads)
            estimates.append(forest.predict(forest_model, dataset))
        else:
            if plan is None:
                plan = metalearners.CrossFitPlan.build(
                    dataset.treatment, k=config.folds, seed=config.seed
                )
            estimates.append(
                metalearners.estimate_metalearner(method, dataset, seed=seed, plan=plan)
            )
    return estimates, forest_model


def _scenario_artifacts(kind: dgp.Scenario, config: RunConfig, out_dir: str):
    """Generate one scenario, run the methods, and write its file set."""
    spec = dgp.ScenarioSpec(kind=kind, n=config.n, seed=config.seed)
    dataset, truth = dgp.generate(spec)
    estimates, forest_model = _run_methods(dataset, config)

    reports = [evaluation.bias_variance_mse(est, truth.tau_true) for est in estimates]
    subgroups = evaluation.subgroup_report(dataset, truth.tau_true, estimates)
    importance = forest.variable_importance(forest_model) if forest_model is not None else None

    os.makedirs(out_dir, exist_ok=True)
    files = evaluation.emit_figure_data(out_dir, truth.tau_true, estimates, importance, subgroups)
    evaluation.write_subgroups_markdown(os.path.join(out_dir, "subgroups.md"), subgroups)
    files.append(os.path.join(out_dir, "subgroups.md"))
    files.extend(
        figures.render_all(out_dir, truth.tau_true, estimates, importance, subgroups,
                           scenario=kind.value)
    )
    if config.dump_data:
        write_dataset_csv(dataset, os.path.join(out_dir, "dataset.csv"))
        write_ground_truth_csv(truth, os.path.join(out_dir, "ground_truth.csv"))
        files.extend([os.path.join(out_dir, "dataset.csv"), os.path.join(out_dir, "ground_truth.csv")])

    summary = {
        "spec": json.loads(spec.to_json()),
        "methods": {
            rep.method: {"bias": rep.bias, "variance": rep.variance, "mse": rep.mse}
            for rep in reports
        },
        "subgroup_mean_absolute_bias": dict(subgroups.mean_absolute_bias),
        "overlap_true_propensity": asdict(evaluation.overlap_check(truth.propensity)),
        "files": sorted(os.path.relpath(f, config.out) for f in files),
    }
    for est in estimates:
        if est.method == "causal_forest" and est.se is not None:
            summary["coverage_95_causal_forest"] = evaluation.coverage(est, truth.tau_true)
            summary["median_interval_width_causal_forest"] = float(
                np.median(2.0 * evaluation.Z_95 * est.se)
            )
    if importance is not None:
        summary["variable_importance"] = importance
    return reports, subgroups, summary


def _cmd_replicate(config: RunConfig) -> int:
    table2_entries = []
    complex_subgroups = None
    scenario_summaries = {}
    for kind in SCENARIO_ORDER:
        out_dir = os.path.join(config.out, kind.value)
        reports, subgroups, summary = _scenario_artifacts(kind, config, out_dir)
        table2_entries.extend((kind.value, rep) for rep in reports)
        scenario_summaries[kind.value] = summary
        if kind is dgp.Scenario.COMPLEX_NONLINEAR:
            complex_subgroups = subgroups

    evaluation.write_method_reports_csv(os.path.join(config.out, "table2.csv"), table2_entries)
    evaluation.write_method_reports_markdown(os.path.join(config.out, "table2.md"), table2_entries)
    evaluation.write_subgroups_csv(os.path.join(config.out, "table3.csv"), complex_subgroups)
    evaluation.write_subgroups_markdown(os.path.join(config.out, "table3.md"), complex_subgroups)
    write_json(
        os.path.join(config.out, "summary.json"),
        {"config": config.as_dict(), "scenarios": scenario_summaries},
    )
    return EXIT_OK


def _cmd_simulate(config: RunConfig) -> int:
    kind = dgp.Scenario.parse(config.scenario)
    reports, subgroups, summary = _scenario_artifacts(kind, config, config.out)
    entries = [(kind.value, rep) for rep in reports]
    evaluation.write_method_reports_csv(os.path.join(config.out, "table2.csv"), entries)
    evaluation.write_method_reports_markdown(os.path.join(config.out, "table2.md"), entries)
    evaluation.write_subgroups_csv(os.path.join(config.out, "table3.csv"), subgroups)
    evaluation.write_subgroups_markdown(os.path.join(config.out, "table3.md"), subgroups)
    write_json(
        os.path.join(config.out, "summary.json"),
        {"config": config.as_dict(), "scenarios": {kind.value: summary}},
    )
    return EXIT_OK


def _cmd_fit(config: RunConfig) -> int:
    try:
        dataset = read_dataset_csv(
            config.data,
            treatment=config.treatment,
            outcome=config.outcome,
            covariates=config.covariates,
        )
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {config.data}")
    except ValueError as exc:
        raise ConfigError(str(exc))

    estimates, forest_model = _run_methods(dataset, config)
    os.makedirs(config.out, exist_ok=True)
    files = []
    for est in estimates:
        path = os.path.join(config.out, f"estimates_{est.method}.csv")
        write_estimates_csv(est, path)
        files.append(path)

    summary = {
        "config": config.as_dict(),
        "n": dataset.n,
        "covariates": list(dataset.feature_names),
        "methods": {
            est.method: {
                "mean_tau_hat": float(est.tau_hat.mean()),
                "sd_tau_hat": float(est.tau_hat.std()),
            }
            for est in estimates
        },
        "files": sorted(os.path.relpath(f, config.out) for f in files),
    }
    if forest_model is not None:
        summary["variable_importance"] = forest.variable_importance(forest_model)
        summary["overlap_e_hat"] = asdict(evaluation.overlap_check(forest_model.e_hat))
    write_json(os.path.join(config.out, "summary.json"), summary)
    return EXIT_OK


def run(argv=None) -> int:
    """Parse arguments and execute; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    try:
        config = _merge_config(args)
        if config.command == "replicate":
            return _cmd_replicate(config)
        if config.command == "simulate":
            return _cmd_simulate(config)
        return _cmd_fit(config)
    except ConfigError as exc:
        print(f"hetfx: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"hetfx: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
