"""Command-line experiment runner.

    eflfg run --config cfg.json [--out DIR] [--seed-override N] [--quiet]
    eflfg validate --config cfg.json
    eflfg zoo --config cfg.json --dump catalog.json [--quiet]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import run_baseline
from .config import ExperimentConfig, parse_config
from .data import SplitPlan, SyntheticSpec, load_dataset, normalize_minmax, partition, synthetic_dataset
from .errors import ConfigError, EflFgError
from .sim import (
    SimulationConfig,
    budget_violation_rate,
    cumulative_regret,
    mse_series,
    run_experiment,
)
from .zoo import build_catalog, dump_catalog

log = logging.getLogger("eflfg")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

SUMMARY_COLUMNS = [
    "algorithm", "dataset", "seed", "rounds", "models", "budget", "final_mse",
    "budget_violation_pct", "mean_cost", "regret_T", "best_model",
]


def prepare(cfg: ExperimentConfig, seed: int):
    """Dataset, pretrain split, client stream and trained catalog for one seed."""
    ds = cfg.dataset
    if "csv" in ds:
        raw = load_dataset(ds["csv"], ds["target"], name=ds.get("name"))
    else:
        raw = synthetic_dataset(SyntheticSpec(**ds["synthetic"]), seed)
    data = normalize_minmax(raw)
    pretrain, stream = partition(data, SplitPlan(cfg.pretrain_fraction, seed, cfg.rounds, cfg.clients))
    catalog = build_catalog(cfg.model_specs(), pretrain, seed)
    if cfg.budget < catalog.costs.max():
        raise ConfigError(f"budget {cfg.budget} is below the largest model cost {catalog.costs.max()}")
    return data, stream, catalog


def simulation_config(cfg: ExperimentConfig) -> SimulationConfig:
    eta, xi = cfg.rates()
    return SimulationConfig(
        budget=cfg.budget, rounds=cfg.rounds, clients=cfg.clients, n_max=cfg.n_max,
        b_t=cfg.b_t, b_loss=cfg.b_loss, eta=eta, xi=xi, oracle=cfg.oracle, alpha=cfg.alpha,
    )


def run_one(cfg: ExperimentConfig, algorithm: str, seed: int, stream, catalog, graph_sink=None):
    sim = simulation_config(cfg)
    if algorithm == "efl-fg":
        return run_experiment(sim, catalog, stream, seed, graph_sink=graph_sink)
    return run_baseline(algorithm, sim, catalog, stream, seed)


def summarize(trace, dataset_name: str, n_models: int) -> dict:
    mse = mse_series(trace)
    row = {
        "algorithm": trace.algorithm,
        "dataset": dataset_name,
        "seed": trace.seed,
        "rounds": len(trace),
        "models": n_models,
        "budget": f"{trace.budget:.9g}",
        "final_mse": f"{mse[-1]:.9g}" if mse.size else "",
        "budget_violation_pct": f"{100 * budget_violation_rate(trace):.9g}",
        "mean_cost": f"{np.mean([r.transmitted_cost for r in trace.records]):.9g}" if trace.records else "",
        "regret_T": "",
        "best_model": "",
    }
    if trace.oracle_losses is not None and len(trace):
        regret, best = cumulative_regret(trace)
        row["regret_T"] = f"{regret[-1]:.9g}"
        row["best_model"] = best
    return row


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def run(cfg: ExperimentConfig, out_dir: Path | None = None) -> int:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary, timing, curves = [], [], []
    failed = False
    for seed in cfg.seeds:
        try:
            data, stream, catalog = prepare(cfg, seed)
        except EflFgError as exc:
            log.error("seed %d: preparation failed: %s", seed, exc)
            failed = True
            continue
        for algorithm in cfg.algorithms:
            stem = f"trace_{algorithm}_seed{seed}"
            partial = out / f"{stem}.csv.partial"
            graphs = []
            sink = graphs.append if cfg.graph_dump and algorithm == "efl-fg" else None
            start = time.perf_counter()
            try:
                trace = run_one(cfg, algorithm, seed, stream, catalog, graph_sink=sink)
            except EflFgError as exc:
                log.error("%s seed %d failed: %s", algorithm, seed, exc)
                partial.write_text(f"# failed: {exc}\n")
                failed = True
                continue
            elapsed = time.perf_counter() - start
            partial.write_text(trace.to_csv(per_model_estimates=cfg.per_model_estimates))
            os.replace(partial, out / f"{stem}.csv")
            if graphs:
                (out / f"graphs_{algorithm}_seed{seed}.txt").write_text(
                    "".join(f"# round {g.round}\n{g.dump()}" for g in graphs)
                )
            summary.append(summarize(trace, data.name, catalog.size))
            timing.append({"algorithm": algorithm, "seed": seed, "wall_clock_s": f"{elapsed:.3f}"})
            curves += [
                {"algorithm": algorithm, "seed": seed, "t": t, "mse_t": f"{m:.9g}"}
                for t, m in enumerate(mse_series(trace), start=1)
            ]
            log.info("%s seed %d: final MSE %s, violations %s%%", algorithm, seed,
                     summary[-1]["final_mse"], summary[-1]["budget_violation_pct"])

    suffix = ".partial" if failed else ""
    (out / f"summary.csv{suffix}").write_text(_csv_text(SUMMARY_COLUMNS, summary))
    (out / f"mse_curve.csv{suffix}").write_text(_csv_text(["algorithm", "seed", "t", "mse_t"], curves))
    (out / "timing.csv").write_text(_csv_text(["algorithm", "seed", "wall_clock_s"], timing))
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eflfg", description="Budgeted ensemble federated learning with feedback graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every (algorithm, seed) pair in a config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="parse and validate a config")
    p_val.add_argument("--config", required=True)

    p_zoo = sub.add_parser("zoo", help="train the model catalog and write it to a JSON dump")
    p_zoo.add_argument("--config", required=True)
    p_zoo.add_argument("--dump", required=True)
    p_zoo.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        if getattr(args, "seed_override", None) is not None:
            if args.seed_override < 0:
                raise ConfigError("--seed-override: must be a non-negative integer")
            cfg = replace(cfg, seeds=(args.seed_override,))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK
    try:
        if args.command == "zoo":
            _, _, catalog = prepare(cfg, cfg.seeds[0])
            dump_catalog(catalog, args.dump)
            log.info("wrote %d models to %s", catalog.size, args.dump)
            return EXIT_OK
        return run(cfg, Path(args.out) if args.out else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EflFgError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
