"""Stage functions wiring generation, preprocessing, training, simulation and reporting.

Each ``stage_*`` function reads and writes one workspace directory::

    <ws>/trace/     raw bundle (interactive, tasks, energy, reboots, fleet, calendar)
    <ws>/records/   reboot-split idle records
    <ws>/train/     annotated traces and reboot annexes per model variant, accuracy
    <ws>/sim/       one report JSON per scheduler
    <ws>/report/    comparison tables

The in-memory functions underneath can be used directly from Python.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import pandas as pd

from . import io
from .analysis import accuracy_summary, relative_report, summary_row
from .config import Config
from .core import IdleRecord, InteractiveSession, SessionKind, idle_gaps
from .io import Bundle
from .predictors.ensemble import FOREST, MLP
from .predictors.monthly import VARIANTS, MonthlyResult, train_all_monthly
from .preprocess import month_bounds, split_on_reboots
from .simulator import SimulationReport, run
from .tracegen import generate_bundle

log = logging.getLogger(__name__)

TRACE, RECORDS, TRAIN, SIM, REPORT = "trace", "records", "train", "sim", "report"
ACCURACY_MODELS = (FOREST, MLP)


@dataclass
class Annotation:
    """Predicted idle time after each logout and each reboot, for one model variant."""

    after_logout: dict
    after_reboot: dict

    @classmethod
    def empty(cls) -> "Annotation":
        return cls({}, {})


# -- in-memory stages ----------------------------------------------------------

def preprocess(bundle: Bundle) -> list[IdleRecord]:
    """Split idle time at reboots and attach the actual idle gap to every record."""
    split = split_on_reboots(bundle.sessions, bundle.reboot_schedule())
    return idle_gaps(split, horizon=bundle.end, computers=bundle.fleet.computers())


def train(bundle: Bundle, records: Sequence[IdleRecord], cfg: Config,
          delta_min: Optional[float] = None, threads: Optional[int] = None) -> MonthlyResult:
    first, last = cfg.training.month_range()
    settings = cfg.training.settings(bundle.tz, cfg.seed, delta_min)
    return train_all_monthly(records, first, last, bundle.calendar, settings, threads)


def annotation(result: MonthlyResult, variant: str) -> Annotation:
    ann = Annotation.empty()
    for rec, pred in result.variant(variant):
        if rec.kind is SessionKind.REBOOT:
            ann.after_reboot[(rec.computer, rec.logout)] = pred
        else:
            ann.after_logout[(rec.computer, rec.login, rec.logout)] = pred
    return ann


def window(bundle: Bundle, cfg: Config) -> tuple[int, int]:
    """Simulation window: the target months."""
    first, last = cfg.training.month_range()
    return month_bounds(*first, bundle.tz)[0], month_bounds(*last, bundle.tz)[1]


def window_sessions(bundle: Bundle, start: int, end: int) -> list[InteractiveSession]:
    return [s for s in bundle.sessions if s.logout > start and s.login < end]


def simulate(bundle: Bundle, scheduler: str, cfg: Config,
             ann: Optional[Annotation] = None, event_log: Optional[list] = None) -> SimulationReport:
    """Replay the bundle's target window under ``scheduler``.

    Sessions without a prediction (for instance those still open at the
    window end) carry 0.
    """
    start, end = window(bundle, cfg)
    ann = ann or Annotation.empty()
    sessions = window_sessions(bundle, start, end)
    annotated = [(s, ann.after_logout.get((s.computer, s.login, s.logout), 0)) for s in sessions]
    policy = cfg.policy.build(bundle.reboot_schedule())
    return run(annotated, bundle.tasks, policy, scheduler, fleet=bundle.fleet.energy(),
               annex=ann.after_reboot, start=start, end=end, seed=cfg.seed,
               strict=cfg.simulation.strict, event_log=event_log)


def needs_models(scheduler: str) -> bool:
    return scheduler.startswith("ml:")


def comparison_table(reports: Mapping[str, Mapping]) -> pd.DataFrame:
    rows = [summary_row(reports[k]) for k in sorted(reports)]
    return pd.DataFrame(rows, columns=["scheduler", "overhead_min", "total_MWh",
                                       "productive_MWh", "wasted_MWh"])


def relative_table(reports: Mapping[str, Mapping], baseline: str = "random") -> pd.DataFrame:
    """Energy and overhead of each scheduler as a percentage of the baseline's."""
    results = {name: {"energy": r["totalHtcMWh"], "overhead": r["meanOverheadMinutes"] or 0.0}
               for name, r in reports.items()}
    rel = relative_report(results, baseline)
    return pd.DataFrame([{"scheduler": k, "energy_pct": round(v["energy_pct"], 2),
                          "overhead_pct": round(v["overhead_pct"], 2)}
                         for k, v in sorted(rel.items())],
                        columns=["scheduler", "energy_pct", "overhead_pct"])


# -- workspace stages ---------------------------------------------------------------

def report_filename(scheduler: str) -> str:
    return scheduler.replace(":", "-") + ".json"


def stage_gen_trace(cfg: Config, ws: Path) -> Bundle:
    bundle = generate_bundle(cfg.generator, cfg.seed)
    io.write_bundle(Path(ws) / TRACE, bundle)
    return bundle


def stage_preprocess(ws: Path) -> list[IdleRecord]:
    ws = Path(ws)
    bundle = io.read_bundle(ws / TRACE)
    records = preprocess(bundle)
    out = ws / RECORDS
    out.mkdir(parents=True, exist_ok=True)
    io.write_records(out / "records.csv", records, bundle.fleet)
    io.write_manifest(out, RECORDS, horizonMs=bundle.end)
    return records


def _load_records(ws: Path, bundle: Bundle) -> list[IdleRecord]:
    io.read_manifest(ws / RECORDS, RECORDS)
    return io.read_records(ws / RECORDS / "records.csv", bundle.fleet)


def write_training(out: Path, bundle: Bundle, cfg: Config, result: MonthlyResult,
                   delta_min: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    start, end = window(bundle, cfg)
    sessions = window_sessions(bundle, start, end)
    for variant in VARIANTS:
        ann = annotation(result, variant)
        rows = [(s, ann.after_logout.get((s.computer, s.login, s.logout), 0)) for s in sessions]
        io.write_annotated(out / f"annotated_{variant}.csv", rows, bundle.fleet)
        io.write_annex(out / f"annex_{variant}.csv", ann.after_reboot, bundle.fleet)
    io.write_accuracy(out / "accuracy.csv", result.accuracy, bundle.fleet)
    io.write_manifest(out, TRAIN, deltaMin=delta_min, months=cfg.training.months,
                      variants=list(VARIANTS))


def stage_train(cfg: Config, ws: Path, delta_min: Optional[float] = None,
                threads: Optional[int] = None) -> MonthlyResult:
    ws = Path(ws)
    bundle = io.read_bundle(ws / TRACE)
    records = _load_records(ws, bundle)
    delta = cfg.training.delta_min if delta_min is None else delta_min
    result = train(bundle, records, cfg, delta, threads)
    write_training(ws / TRAIN, bundle, cfg, result, delta)
    return result


def load_annotation(train_dir: Path, bundle: Bundle, variant: str) -> Annotation:
    io.read_manifest(train_dir, TRAIN)
    rows = io.read_annotated(train_dir / f"annotated_{variant}.csv", bundle.fleet)
    annex = io.read_annex(train_dir / f"annex_{variant}.csv", bundle.fleet)
    return Annotation({(s.computer, s.login, s.logout): p for s, p in rows}, annex)


def stage_simulate(cfg: Config, ws: Path, schedulers: Sequence[str],
                   events: bool = False) -> dict[str, dict]:
    ws = Path(ws)
    bundle = io.read_bundle(ws / TRACE)
    out = ws / SIM
    out.mkdir(parents=True, exist_ok=True)
    docs = {}
    for name in schedulers:
        ann = load_annotation(ws / TRAIN, bundle, name[3:]) if needs_models(name) else None
        event_log = [] if events else None
        report = simulate(bundle, name, cfg, ann, event_log)
        doc = {"schemaVersion": io.SCHEMA_VERSION, **report.to_json()}
        io.dump_json(out / report_filename(name), doc)
        if event_log is not None:
            write_events(out / (report_filename(name)[:-5] + "_events.csv"), event_log, bundle)
        docs[name] = doc
        log.info("%s: wasted %.4f MWh", name, doc["wastedMWh"])
    return docs


def write_events(path: Path, events, bundle: Bundle) -> None:
    comps = bundle.fleet.computers()
    io.write_table(path, pd.DataFrame({
        "time_ms": [e.time for e in events],
        "kind": [e.kind.name for e in events],
        "computer": ["" if e.machine < 0 else bundle.fleet.name(comps[e.machine]) for e in events],
        "payload": ["" if e.payload is None else str(e.payload) for e in events],
    }))


def load_reports(sim_dir: Path) -> dict[str, dict]:
    docs = {}
    for path in sorted(Path(sim_dir).glob("*.json")):
        doc = json.loads(path.read_text())
        io.check_schema(doc, str(path))
        docs[doc["scheduler"]] = doc
    if not docs:
        raise io.MissingInput(f"no simulation reports in {sim_dir}")
    return docs


def stage_report(ws: Path) -> dict[str, pd.DataFrame]:
    ws = Path(ws)
    docs = load_reports(ws / SIM)
    out = ws / REPORT
    out.mkdir(parents=True, exist_ok=True)
    tables = {"comparison": comparison_table(docs)}
    if "random" in docs:
        tables["relative"] = relative_table(docs)
    acc_path = ws / TRAIN / "accuracy.csv"
    if acc_path.exists():
        acc = io.read_accuracy(acc_path)
        tables["accuracy"] = pd.DataFrame(accuracy_summary(acc.to_dict("records")))
    for name, df in tables.items():
        io.write_table(out / f"{name}.csv", df)
    io.write_manifest(out, REPORT, tables=sorted(tables))
    return tables


def stage_sweep(cfg: Config, ws: Path, deltas: Sequence[float], schedulers: Sequence[str],
                threads: Optional[int] = None) -> pd.DataFrame:
    """Train once per delta and simulate every scheduler against each training."""
    ws = Path(ws)
    bundle = io.read_bundle(ws / TRACE)
    records = _load_records(ws, bundle)
    rows, acc_rows = [], []
    baseline = {}
    for name in schedulers:
        if not needs_models(name):
            baseline[name] = summary_row(simulate(bundle, name, cfg).to_json())
    for delta in deltas:
        result = train(bundle, records, cfg, delta, threads)
        tdir = ws / "sweep" / f"delta_{delta:g}"
        write_training(tdir, bundle, cfg, result, delta)
        for r in result.accuracy:
            acc_rows.append({"delta_min": delta, "computer": bundle.fleet.name(r.computer),
                             "month": r.month, "model": r.model, "mse": r.mse, "r2": r.r2})
        for name in schedulers:
            if needs_models(name):
                row = summary_row(simulate(bundle, name, cfg, annotation(result, name[3:])).to_json())
            else:
                row = baseline[name]
            rows.append({"delta_min": delta, **row})
    table = pd.DataFrame(rows)
    io.write_table(ws / "sweep" / "comparison.csv", table)
    io.write_table(ws / "sweep" / "accuracy.csv", pd.DataFrame(acc_rows))
    io.write_manifest(ws / "sweep", "sweep", deltas=list(deltas), schedulers=list(schedulers))
    return table


def run_all(cfg: Config, ws: Path, schedulers: Optional[Sequence[str]] = None,
            threads: Optional[int] = None) -> dict[str, pd.DataFrame]:
    """Every stage in order into one workspace."""
    schedulers = list(schedulers or cfg.simulation.schedulers)
    stage_gen_trace(cfg, ws)
    stage_preprocess(ws)
    if any(needs_models(s) for s in schedulers):
        stage_train(cfg, ws, threads=threads)
    stage_simulate(cfg, ws, schedulers)
    return stage_report(ws)
