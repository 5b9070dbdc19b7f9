"""Command-line entry points: single runs and parameter sweeps.

Config files are YAML (JSON is accepted too). Scenario keys sit at the top
level; engine options go under ``engine``::

    tx_power_dbm: 30
    gamma_r_db: 3
    engine:
      scheme: joint-ma
      max_outer: 50

Exit codes: 0 on success, 1 on runtime failures (infeasible scenario,
unwritable output), 2 on usage errors (bad arguments or malformed config).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import yaml

from .channel import ScenarioConfig, generate_scenario
from .engine import SCHEMES, EngineConfig, InfeasibleScenario, run

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SWEEP_AXES = ("tx_power_dbm", "n_t", "n_r", "m_t", "m_r", "paths_L", "k_d", "k_u", "gamma_r_db")
RUN_COLUMNS = ("iter", "sum_rate_nats", "sum_rate_bits", "sinr_radar_db",
               "power_residual", "distance_residual", "sensing_residual", "ms")
TRIAL_COLUMNS = ("seed", "iterations", "converged", "sum_rate_nats", "sum_rate_bits")
SUMMARY_COLUMNS = ("axis", "value", "scheme", "trials", "failed",
                   "mean_nats", "stderr_nats", "mean_bits", "stderr_bits")


class UsageError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else format(x, ".12g")


def _load_mapping(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data


def parse_config(data):
    """Split a config mapping into ``(ScenarioConfig, EngineConfig)``."""
    data = dict(data)
    engine = data.pop("engine", None) or {}
    if not isinstance(engine, dict):
        raise UsageError("'engine' must be a mapping")
    try:
        return ScenarioConfig.from_dict(data), EngineConfig(**engine)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def load_config(path):
    return parse_config(_load_mapping(path))


# ---------------------------------------------------------------------------
# Single run
# ---------------------------------------------------------------------------

def run_rows(log):
    rows = []
    for i in range(log.iterations):
        rate = log.sum_rate[i]
        sinr = log.sinr_radar[i]
        rows.append((i + 1, rate, rate / math.log(2),
                     10 * math.log10(sinr) if sinr > 0 else -math.inf,
                     log.power_residual[i], log.distance_residual[i],
                     log.sensing_residual[i], log.wall_ms[i]))
    return rows


def write_run_csv(log, out):
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for row in run_rows(log):
            writer.writerow([_fmt(v) for v in row])


def run_single(config_path, seed, out_path, timing=False):
    """Run one trial and write the per-iteration CSV; returns an exit code."""
    try:
        scenario_cfg, engine_cfg = load_config(config_path)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = generate_scenario(scenario_cfg, seed)
        log = run(scenario, engine_cfg, seed, timing=timing)
        write_run_csv(log, out_path)
    except InfeasibleScenario as exc:
        print(f"error: infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: cannot write {out_path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def parse_sweep(data):
    """Validate a sweep mapping; returns a normalized dict."""
    data = dict(data)
    axis = data.get("axis")
    if axis not in SWEEP_AXES:
        raise UsageError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = data.get("values")
    if not isinstance(values, list) or not values:
        raise UsageError("values must be a nonempty list")
    trials = data.get("trials", 1)
    if not isinstance(trials, int) or trials < 1:
        raise UsageError("trials must be a positive integer")
    schemes = data.get("schemes", ["joint-ma"])
    if not isinstance(schemes, list) or not schemes or any(s not in SCHEMES for s in schemes):
        raise UsageError(f"schemes must be a nonempty subset of {SCHEMES}")
    base = data.get("base") or {}
    if not isinstance(base, dict):
        raise UsageError("base must be a mapping")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise UsageError("seed must be a nonnegative integer")
    unknown = set(data) - {"axis", "values", "trials", "schemes", "base", "seed"}
    if unknown:
        raise UsageError(f"unknown sweep keys: {sorted(unknown)}")
    # Validate every cell up front so a bad value fails before any work.
    for value in values:
        for scheme in schemes:
            cell_config(base, axis, value, scheme)
    return {"axis": axis, "values": values, "trials": trials, "schemes": schemes,
            "base": base, "seed": seed}


def cell_config(base, axis, value, scheme):
    data = {k: v for k, v in base.items() if k != "engine"}
    data[axis] = value
    engine = dict(base.get("engine") or {})
    engine["scheme"] = scheme
    data["engine"] = engine
    return parse_config(data)


def _trial(job):
    scenario_cfg, engine_cfg, seed = job
    try:
        log = run(generate_scenario(scenario_cfg, seed), engine_cfg, seed, timing=False)
    except InfeasibleScenario:
        return seed, 0, False, math.nan
    return seed, log.iterations, log.converged, log.final_sum_rate


def _cell_name(axis, value, scheme):
    return f"{axis}={_fmt(value)}__{scheme}.csv"


def summarize(rates):
    rates = np.asarray([r for r in rates if not math.isnan(r)], dtype=float)
    if rates.size == 0:
        return math.nan, math.nan
    se = rates.std(ddof=1) / math.sqrt(rates.size) if rates.size > 1 else 0.0
    return float(rates.mean()), float(se)


def run_sweep(sweep_path, out_dir, jobs=1):
    """Run every (value, scheme, seed) trial and write cell CSVs, a summary and a manifest."""
    try:
        spec = parse_sweep(_load_mapping(sweep_path))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seeds = [spec["seed"] + i for i in range(spec["trials"])]
    cells = [(v, s) for v in spec["values"] for s in spec["schemes"]]
    work = []
    for value, scheme in cells:
        scenario_cfg, engine_cfg = cell_config(spec["base"], spec["axis"], value, scheme)
        work += [(scenario_cfg, engine_cfg, seed) for seed in seeds]
    if jobs > 1:
        with Pool(jobs) as pool:
            results = pool.map(_trial, work, chunksize=1)
    else:
        results = [_trial(job) for job in work]

    out = Path(out_dir)
    ln2 = math.log(2)
    manifest_cells = []
    summary_rows = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for c, (value, scheme) in enumerate(cells):
            chunk = results[c * len(seeds):(c + 1) * len(seeds)]
            name = _cell_name(spec["axis"], value, scheme)
            with open(out / name, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(TRIAL_COLUMNS)
                for seed, iters, conv, rate in chunk:
                    writer.writerow([_fmt(seed), _fmt(iters), _fmt(conv),
                                     _fmt(rate), _fmt(rate / ln2)])
            mean, se = summarize([r[3] for r in chunk])
            failed = sum(1 for r in chunk if math.isnan(r[3]))
            summary_rows.append((spec["axis"], value, scheme, len(chunk), failed,
                                 mean, se, mean / ln2, se / ln2))
            scenario_cfg, engine_cfg = cell_config(spec["base"], spec["axis"], value, scheme)
            manifest_cells.append({
                "file": name, "value": value, "scheme": scheme, "seeds": seeds,
                "scenario": scenario_cfg.to_dict(), "engine": _engine_dict(engine_cfg),
                "sum_rate_nats": [None if math.isnan(r[3]) else r[3] for r in chunk],
            })
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            for row in summary_rows:
                writer.writerow([row[0], _fmt(row[1]), row[2]] + [_fmt(v) for v in row[3:]])
        manifest = {"sweep": spec, "cells": manifest_cells}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _engine_dict(cfg):
    data = asdict(cfg)
    data["curvature_relax"] = list(cfg.curvature_relax)
    return data


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _jobs(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("jobs must be at least 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maisac", description="Movable-antenna ISAC transceiver and position optimization.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one trial and write the per-iteration CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=_seed, required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--timing", action="store_true",
                       help="fill the ms column with wall-clock times (output is then not reproducible)")
    p_sweep = sub.add_parser("sweep", help="run a parameter sweep over seeds and schemes")
    p_sweep.add_argument("--spec", required=True)
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.add_argument("--jobs", type=_jobs, default=1)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "run":
        return run_single(args.config, args.seed, args.out, timing=args.timing)
    return run_sweep(args.spec, args.out_dir, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
