"""Command-line entry point: ``voltsim <subcommand> --out WORKSPACE [options]``.

On failure a one-line JSON object ``{"error": ..., "type": ...}`` is written
to stderr and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .config import Config, ConfigError
from .core import EmptyTrace
from .io import MissingInput, SchemaError
from .preprocess import CalendarError, EmptyTrainSet
from .schedulers import SCHEDULER_NAMES
from .tracegen import InfeasibleRates

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_RUNTIME = 5

DEFAULT_SWEEP_DELTAS = (5.0, 10.0, 20.0, 30.0, 60.0)


def _float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of numbers")
    if not values or min(values) <= 0:
        raise argparse.ArgumentTypeError("deltas must be positive")
    return values


def _schedulers(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    if "all" in names:
        return list(SCHEDULER_NAMES)
    bad = [n for n in names if n not in SCHEDULER_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown scheduler(s) {bad}; choose from {', '.join(SCHEDULER_NAMES)} or 'all'")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (defaults otherwise)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, required=True, help="workspace directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="voltsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-trace", parents=[common], help="generate a synthetic trace bundle")
    sub.add_parser("preprocess", parents=[common], help="split reboots and derive idle records")
    t = sub.add_parser("train", parents=[common], help="monthly training and annotation")
    t.add_argument("--delta", type=_float_list, help="densification spacing in minutes")
    t.add_argument("--months", help="target months, YYYY-MM:YYYY-MM")
    s = sub.add_parser("simulate", parents=[common], help="replay the trace under schedulers")
    s.add_argument("--scheduler", type=_schedulers, help="comma-separated names or 'all'")
    s.add_argument("--months", help="target months, YYYY-MM:YYYY-MM")
    s.add_argument("--events", action="store_true", help="also write an event log CSV")
    sub.add_parser("report", parents=[common], help="comparison tables from simulation reports")
    w = sub.add_parser("sweep", parents=[common], help="delta x scheduler grid")
    w.add_argument("--delta", type=_float_list, default=list(DEFAULT_SWEEP_DELTAS))
    w.add_argument("--scheduler", type=_schedulers)
    w.add_argument("--months", help="target months, YYYY-MM:YYYY-MM")
    r = sub.add_parser("run", parents=[common], help="every stage in order")
    r.add_argument("--scheduler", type=_schedulers)
    return p


def _config(args) -> Config:
    cfg = Config.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    months = getattr(args, "months", None)
    if months:
        cfg = dataclasses.replace(cfg, training=dataclasses.replace(cfg.training, months=months))
    return cfg


def _threads() -> Optional[int]:
    raw = os.environ.get("VOLT_SIM_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"VOLT_SIM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("VOLT_SIM_THREADS must be >= 1")
    return n


def execute(args) -> dict:
    cfg = _config(args)
    ws = args.out
    ws.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "gen-trace":
        b = pipeline.stage_gen_trace(cfg, ws)
        return {"sessions": len(b.sessions), "tasks": len(b.tasks),
                "computers": len(b.fleet.machines)}
    if cmd == "preprocess":
        return {"records": len(pipeline.stage_preprocess(ws))}
    if cmd == "train":
        deltas = args.delta or [cfg.training.delta_min]
        if len(deltas) != 1:
            raise ConfigError("train takes a single --delta; use sweep for several")
        result = pipeline.stage_train(cfg, ws, deltas[0], _threads())
        return {"records": len(result.records), "accuracyRows": len(result.accuracy)}
    if cmd == "simulate":
        names = args.scheduler or list(cfg.simulation.schedulers)
        docs = pipeline.stage_simulate(cfg, ws, names, args.events)
        return {n: {"wastedMWh": d["wastedMWh"], "totalHtcMWh": d["totalHtcMWh"]}
                for n, d in docs.items()}
    if cmd == "report":
        tables = pipeline.stage_report(ws)
        return {"tables": sorted(tables)}
    if cmd == "sweep":
        names = args.scheduler or list(cfg.simulation.schedulers)
        table = pipeline.stage_sweep(cfg, ws, args.delta, names, _threads())
        return {"rows": len(table)}
    if cmd == "run":
        tables = pipeline.run_all(cfg, ws, args.scheduler, _threads())
        return {"tables": sorted(tables)}
    raise AssertionError(cmd)


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail(ValueError("invalid command line"), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = execute(args)
    except (MissingInput, SchemaError) as exc:
        return _fail(exc, EXIT_INPUT)
    except (ConfigError, CalendarError, InfeasibleRates) as exc:
        return _fail(exc, EXIT_CONFIG)
    except (EmptyTrace, EmptyTrainSet, ValueError, RuntimeError) as exc:
        return _fail(exc, EXIT_RUNTIME)
    print(json.dumps({"command": args.command, **summary}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
