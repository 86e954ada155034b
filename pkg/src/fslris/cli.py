"""Command-line front end: ``fslris simulate`` and ``fslris verify``."""
from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
import tempfile
import time
from pathlib import Path

from . import flsim, kernels, oracles
from .scenario import Scenario, coerce_field, scenario_to_config

RUN_DEFAULTS = {"trials": 200, "rounds": 1, "schemes": "proposed,benchmark", "sweep": "",
                "train": "false", "workers": 1}

COLUMN_DOCS = {
    "point": "index of the sweep point",
    "sweep_var": "swept scenario field (empty without a sweep)",
    "sweep_value": "value of the swept field",
    "scheme": "proposed | benchmark (random association, equal bandwidth) | direct (no RIS)",
    "trial": "trial index; channels and requests come from seeded substreams of (seed, trial, round)",
    "rounds": "rounds run in this trial",
    "utility": "mean over rounds of received models per second (0 when none received)",
    "Q_total": "mean over rounds of the number of received local models",
    "T_star": "mean over rounds of the round latency in seconds",
    "participants": "mean over rounds of users scheduled (inferred as requesting)",
    "requesting": "mean size of the set whose direct SNR misses the threshold (proposed only)",
    "case": "association game of the last round: one_to_one | one_to_many | none (proposed only)",
    "matched_users": "mean number of RIS-assisted users (proposed only)",
    "proposals": "mean proposals made by the matching game (proposed only)",
    "match_rounds": "mean rounds of the matching game (proposed only)",
    "epsilon": "mean per-RIS detector accuracy",
    "eta": "mean fused detector accuracy 1-(1-eps)^K",
    "chi1": "mean fused-over-single accuracy ratio",
    "kappa_mean": "mean SNR increment over scheduled users",
    "chi2_mean": "mean of exp(kappa) over scheduled users",
    "p_c_mean": "mean direct-only reception probability exp(-threshold / mean direct SNR)",
    "updates": "rounds whose aggregation received at least one model",
    "test_accuracy": "final global-model test accuracy (nan without training)",
    "test_loss": "final global-model test loss (nan without training)",
    "idle_accuracy": "final test accuracy on the Idle class (nan without training)",
}


class ConfigError(ValueError):
    pass


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17e")
    return str(value)


def _coerce(name: str, raw: str):
    try:
        return coerce_field(name, raw)
    except KeyError:
        raise ConfigError(f"unknown scenario field '{name}'") from None
    except ValueError as exc:
        raise ConfigError(f"bad value for '{name}': {raw!r} ({exc})") from None


def _parse_sweep(text: str):
    if not text:
        return None
    if "=" not in text:
        raise ConfigError(f"sweep must look like VAR=v1,v2,... (got {text!r})")
    name, raw = text.split("=", 1)
    name = name.strip()
    values = [_coerce(name, v) for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"sweep over '{name}' has no values")
    return name, values


def resolve(args) -> tuple[Scenario, dict]:
    """Merge the config file and command-line flags; raise ConfigError naming the bad field."""
    parser = configparser.ConfigParser()
    if args.config:
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config '{args.config}': {exc}") from None
    values = {k: _coerce(k, v) for k, v in parser.items("scenario")} if parser.has_section("scenario") else {}
    run = dict(RUN_DEFAULTS)
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key not in RUN_DEFAULTS:
                raise ConfigError(f"unknown run setting '{key}'")
            run[key] = raw
    for key in ("trials", "rounds", "sweep", "workers"):
        flag = getattr(args, key)
        if flag is not None:
            run[key] = flag
    if args.scheme:
        run["schemes"] = ",".join(args.scheme)
    if args.train:
        run["train"] = "true"
    if args.seed is not None:
        values["rng_seed"] = args.seed

    try:
        scenario = Scenario(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None
    out = {}
    for key in ("trials", "rounds", "workers"):
        try:
            out[key] = int(run[key])
        except ValueError:
            raise ConfigError(f"'{key}' must be an integer, got {run[key]!r}") from None
        if out[key] < 1:
            raise ConfigError(f"'{key}' must be at least 1")
    out["schemes"] = tuple(s.strip() for s in str(run["schemes"]).split(",") if s.strip())
    for s in out["schemes"]:
        if s not in flsim.SCHEMES:
            raise ConfigError(f"unknown scheme '{s}' (choose from {', '.join(flsim.SCHEMES)})")
    if not out["schemes"]:
        raise ConfigError("'schemes' is empty")
    out["sweep"] = _parse_sweep(str(run["sweep"]).strip())
    if out["sweep"] is not None:
        try:
            flsim.sweep_points(scenario, out["sweep"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad sweep over '{out['sweep'][0]}': {exc}") from None
    out["train"] = str(run["train"]).strip().lower() in ("1", "true", "yes", "on")
    return scenario, out


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _manifest(scenario: Scenario, run: dict) -> str:
    lines = ["# fslris simulate manifest", "", scenario_to_config(scenario).rstrip(), "", "[run]"]
    sweep = run["sweep"]
    lines += [f"seed = {scenario.rng_seed}", f"trials = {run['trials']}", f"rounds = {run['rounds']}",
              f"schemes = {','.join(run['schemes'])}",
              f"sweep = {'' if sweep is None else sweep[0] + '=' + ','.join(map(str, sweep[1]))}",
              f"train = {str(run['train']).lower()}", "", "[results.csv columns]"]
    lines += [f"{c} = {COLUMN_DOCS[c]}" for c in flsim.RESULT_COLUMNS]
    lines += ["", "[summary.csv columns]",
              "point, sweep_var, sweep_value, scheme = as in results.csv",
              "trials = rows averaged",
              "<metric>_mean, <metric>_stderr = mean and standard error over trials"]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    try:
        scenario, run = resolve(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rows = flsim.run_experiment(scenario, run["sweep"], run["schemes"], run["trials"],
                                run["rounds"], run["train"], run["workers"])
    summary = flsim.summarize(rows)
    # build everything in a scratch directory, then move into place
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        tmp = Path(tmp)
        _write_csv(tmp / "results.csv", flsim.RESULT_COLUMNS, rows)
        _write_csv(tmp / "summary.csv", list(summary[0].keys()), summary)
        (tmp / "manifest").write_text(_manifest(scenario, run))
        for name in ("results.csv", "summary.csv", "manifest"):
            os.replace(tmp / name, out / name)
    print(f"wrote {len(rows)} rows to {out / 'results.csv'} "
          f"({time.perf_counter() - started:.1f}s, {kernels.BACKEND} kernels)")
    return 0


def cmd_verify(args) -> int:
    checks = oracles.run_suite(args.suite, seed=args.seed or 0)
    for c in checks:
        print(c.line(), flush=True)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    print(f"all {len(checks)} properties passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fslris", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a seeded experiment and write CSV tables")
    sim.add_argument("--config", help="key = value file with [scenario] and [run] sections")
    sim.add_argument("--seed", type=int, help="root seed (overrides rng_seed)")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--rounds", type=int)
    sim.add_argument("--sweep", help="VAR=v1,v2,... over one scenario field")
    sim.add_argument("--scheme", action="append", choices=flsim.SCHEMES,
                     help="scheme to run; repeat for several (default proposed and benchmark)")
    sim.add_argument("--train", action="store_true", help="train the classifier every round")
    sim.add_argument("--workers", type=int, help="worker processes")
    sim.add_argument("--out", default="results", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run oracle suites")
    ver.add_argument("suite", choices=sorted(oracles.SUITES) + ["all"])
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
