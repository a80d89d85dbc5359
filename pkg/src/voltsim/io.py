"""Reading and writing the CSV/JSON artifacts exchanged between pipeline stages.

Every stage directory carries a ``manifest.json`` with a schema version;
readers refuse directories written under a different version.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .core import (ComputerId, EnergyProfile, Fleet, IdleRecord, InteractiveSession,
                   SessionKind, Task)
from .preprocess import TermCalendar

SCHEMA_VERSION = 1
MANIFEST = "manifest.json"

INTERACTIVE_COLUMNS = ("login_ms", "computer", "logout_ms")
TASK_COLUMNS = ("task_id", "submit_ms", "duration_ms")
ENERGY_COLUMNS = ("clusterName", "active_w", "idle_w", "sleep_w")
REBOOT_COLUMNS = ("clusterName", "reboot_time_ms")
FLEET_COLUMNS = ("computer",)
RECORD_COLUMNS = ("login_ms", "computer", "logout_ms", "idle_ms", "kind")
ANNOTATED_COLUMNS = ("login_ms", "computer", "logout_ms", "predicted_idle_ms")
ANNEX_COLUMNS = ("computer", "reboot_ms", "predicted_idle_ms")
ACCURACY_COLUMNS = ("computer", "month", "model", "mse", "r2")

_KIND_NAMES = {SessionKind.REAL: "real", SessionKind.REBOOT: "reboot",
               SessionKind.DENSIFY: "densify"}
_KIND_BY_NAME = {v: k for k, v in _KIND_NAMES.items()}


class SchemaError(ValueError):
    """A file is missing, malformed, or was written under another schema version."""


class MissingInput(FileNotFoundError):
    pass


# -- low level ---------------------------------------------------------------

def read_table(path: Path, columns: Sequence[str], dtypes: Optional[Mapping] = None) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingInput(f"missing input file {path}")
    try:
        df = pd.read_csv(path, dtype=dtypes, keep_default_na=False, na_values=[""],
                         encoding="utf-8")
    except (ValueError, pd.errors.ParserError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; expected {list(columns)}")
    df = df[list(columns)]
    if df.isna().any().any():
        raise SchemaError(f"{path}: empty cells")
    return df


def write_table(path: Path, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def _int_column(df: pd.DataFrame, col: str, path: Path) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    if values.isna().any() or (values != np.floor(values)).any():
        raise SchemaError(f"{path}: column {col} must hold integers")
    return values.to_numpy(dtype=np.int64)


def write_manifest(directory: Path, stage: str, **extra) -> None:
    meta = {"schemaVersion": SCHEMA_VERSION, "stage": stage, **extra}
    (Path(directory) / MANIFEST).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_manifest(directory: Path, stage: Optional[str] = None) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise MissingInput(f"{directory} has no {MANIFEST}")
    meta = json.loads(path.read_text())
    version = meta.get("schemaVersion")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema version {version!r}, expected {SCHEMA_VERSION}")
    if stage is not None and meta.get("stage") != stage:
        raise SchemaError(f"{path}: stage {meta.get('stage')!r}, expected {stage!r}")
    return meta


def check_schema(doc: Mapping, what: str = "document") -> None:
    version = doc.get("schemaVersion")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{what}: schema version {version!r}, expected {SCHEMA_VERSION}")


def dump_json(path: Path, doc) -> None:
    """Canonical JSON: sorted keys, fixed float repr, trailing newline."""
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


# -- the raw trace bundle ------------------------------------------------------

@dataclass
class Bundle:
    """Everything a simulation needs that does not come from a model."""

    fleet: Fleet
    sessions: list[InteractiveSession]
    tasks: list[Task]
    reboots: dict[str, list[int]]
    calendar: TermCalendar
    start: int
    end: int
    tz: str = "UTC"
    meta: dict = field(default_factory=dict)

    def reboot_schedule(self) -> dict[ComputerId, list[int]]:
        """Cluster reboot times expanded to every machine of the cluster."""
        out = {}
        for ci, cname in enumerate(self.fleet.clusters):
            times = sorted(self.reboots.get(cname, ()))
            for comp in self.fleet.in_cluster(ci):
                out[comp] = list(times)
        return out


def write_sessions(path: Path, sessions: Iterable[InteractiveSession], fleet: Fleet) -> None:
    rows = sorted(sessions, key=lambda s: (s.login, s.computer, s.logout))
    write_table(path, pd.DataFrame({
        "login_ms": [s.login for s in rows],
        "computer": [fleet.name(s.computer) for s in rows],
        "logout_ms": [s.logout for s in rows],
    }, columns=INTERACTIVE_COLUMNS))


def read_sessions(path: Path, fleet: Fleet) -> list[InteractiveSession]:
    df = read_table(path, INTERACTIVE_COLUMNS, {"computer": str})
    login = _int_column(df, "login_ms", path)
    logout = _int_column(df, "logout_ms", path)
    comps = [_lookup(fleet, n, path) for n in df["computer"]]
    return [InteractiveSession(int(a), c, int(b)) for a, c, b in zip(login, comps, logout)]


def _lookup(fleet: Fleet, name: str, path) -> ComputerId:
    try:
        return fleet.lookup(name)
    except KeyError:
        raise SchemaError(f"{path}: computer {name!r} not in the fleet") from None


def write_tasks(path: Path, tasks: Iterable[Task]) -> None:
    rows = list(tasks)
    write_table(path, pd.DataFrame({
        "task_id": [t.id for t in rows],
        "submit_ms": [t.submit for t in rows],
        "duration_ms": [t.duration for t in rows],
    }, columns=TASK_COLUMNS))


def read_tasks(path: Path) -> list[Task]:
    df = read_table(path, TASK_COLUMNS, {"task_id": str})
    submit = _int_column(df, "submit_ms", path)
    duration = _int_column(df, "duration_ms", path)
    if (duration < 0).any():
        raise SchemaError(f"{path}: negative task duration")
    if df["task_id"].duplicated().any():
        raise SchemaError(f"{path}: duplicate task ids")
    return [Task(i, int(s), int(d)) for i, s, d in zip(df["task_id"], submit, duration)]


def write_energy(path: Path, profiles: Mapping[str, EnergyProfile]) -> None:
    names = sorted(profiles)
    write_table(path, pd.DataFrame({
        "clusterName": names,
        "active_w": [profiles[n].active_w for n in names],
        "idle_w": [profiles[n].idle_w for n in names],
        "sleep_w": [profiles[n].sleep_w for n in names],
    }, columns=ENERGY_COLUMNS))


def read_energy(path: Path) -> dict[str, EnergyProfile]:
    df = read_table(path, ENERGY_COLUMNS, {"clusterName": str})
    out = {}
    for row in df.itertuples(index=False):
        try:
            out[row.clusterName] = EnergyProfile(float(row.active_w), float(row.idle_w),
                                                 float(row.sleep_w))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: cluster {row.clusterName}: {exc}") from None
    return out


def write_reboots(path: Path, reboots: Mapping[str, Sequence[int]]) -> None:
    pairs = sorted((c, int(t)) for c, ts in reboots.items() for t in ts)
    write_table(path, pd.DataFrame(pairs, columns=REBOOT_COLUMNS))


def read_reboots(path: Path) -> dict[str, list[int]]:
    df = read_table(path, REBOOT_COLUMNS, {"clusterName": str})
    times = _int_column(df, "reboot_time_ms", path)
    out: dict[str, list[int]] = {}
    for name, t in zip(df["clusterName"], times):
        out.setdefault(name, []).append(int(t))
    return {k: sorted(v) for k, v in out.items()}


def write_bundle(directory: Path, bundle: Bundle) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_sessions(d / "interactive.csv", bundle.sessions, bundle.fleet)
    write_tasks(d / "tasks.csv", bundle.tasks)
    write_energy(d / "energy.csv", {c: bundle.fleet.profiles[i]
                                    for i, c in enumerate(bundle.fleet.clusters)})
    write_reboots(d / "reboots.csv", bundle.reboots)
    write_table(d / "fleet.csv", pd.DataFrame(
        {"computer": [bundle.fleet.name(c) for c in bundle.fleet.computers()]}))
    (d / "calendar.json").write_text(bundle.calendar.to_json() + "\n")
    write_manifest(d, "trace", startMs=bundle.start, endMs=bundle.end, tz=bundle.tz,
                   **bundle.meta)


def read_bundle(directory: Path) -> Bundle:
    d = Path(directory)
    meta = read_manifest(d, "trace")
    profiles = read_energy(d / "energy.csv")
    names = list(read_table(d / "fleet.csv", FLEET_COLUMNS, {"computer": str})["computer"])
    try:
        fleet = Fleet.from_names(names, profiles)
    except ValueError as exc:
        raise SchemaError(f"{d}: {exc}") from None
    try:
        calendar = TermCalendar.from_json((d / "calendar.json").read_text())
    except FileNotFoundError:
        raise MissingInput(f"missing input file {d / 'calendar.json'}") from None
    extra = {k: v for k, v in meta.items()
             if k not in ("schemaVersion", "stage", "startMs", "endMs", "tz")}
    return Bundle(fleet, read_sessions(d / "interactive.csv", fleet), read_tasks(d / "tasks.csv"),
                  read_reboots(d / "reboots.csv"), calendar, int(meta["startMs"]),
                  int(meta["endMs"]), meta.get("tz", "UTC"), extra)


# -- stage outputs ------------------------------------------------------------------

def write_records(path: Path, records: Iterable[IdleRecord], fleet: Fleet) -> None:
    rows = list(records)
    write_table(path, pd.DataFrame({
        "login_ms": [r.login for r in rows],
        "computer": [fleet.name(r.computer) for r in rows],
        "logout_ms": [r.logout for r in rows],
        "idle_ms": [r.idle for r in rows],
        "kind": [_KIND_NAMES[r.kind] for r in rows],
    }, columns=RECORD_COLUMNS))


def read_records(path: Path, fleet: Fleet) -> list[IdleRecord]:
    df = read_table(path, RECORD_COLUMNS, {"computer": str, "kind": str})
    login = _int_column(df, "login_ms", path)
    logout = _int_column(df, "logout_ms", path)
    idle = _int_column(df, "idle_ms", path)
    bad = set(df["kind"]) - set(_KIND_BY_NAME)
    if bad:
        raise SchemaError(f"{path}: unknown record kind(s) {sorted(bad)}")
    comps = [_lookup(fleet, n, path) for n in df["computer"]]
    return [IdleRecord(InteractiveSession(int(a), c, int(b), _KIND_BY_NAME[k]), int(i))
            for a, c, b, i, k in zip(login, comps, logout, idle, df["kind"])]


def write_annotated(path: Path, annotated: Iterable[tuple[InteractiveSession, int]],
                    fleet: Fleet) -> None:
    rows = list(annotated)
    write_table(path, pd.DataFrame({
        "login_ms": [s.login for s, _ in rows],
        "computer": [fleet.name(s.computer) for s, _ in rows],
        "logout_ms": [s.logout for s, _ in rows],
        "predicted_idle_ms": [int(p) for _, p in rows],
    }, columns=ANNOTATED_COLUMNS))


def read_annotated(path: Path, fleet: Fleet) -> list[tuple[InteractiveSession, int]]:
    df = read_table(path, ANNOTATED_COLUMNS, {"computer": str})
    login = _int_column(df, "login_ms", path)
    logout = _int_column(df, "logout_ms", path)
    pred = _int_column(df, "predicted_idle_ms", path)
    comps = [_lookup(fleet, n, path) for n in df["computer"]]
    return [(InteractiveSession(int(a), c, int(b)), int(p))
            for a, c, b, p in zip(login, comps, logout, pred)]


def write_annex(path: Path, annex: Mapping[tuple[ComputerId, int], int], fleet: Fleet) -> None:
    keys = sorted(annex)
    write_table(path, pd.DataFrame({
        "computer": [fleet.name(c) for c, _ in keys],
        "reboot_ms": [r for _, r in keys],
        "predicted_idle_ms": [int(annex[k]) for k in keys],
    }, columns=ANNEX_COLUMNS))


def read_annex(path: Path, fleet: Fleet) -> dict[tuple[ComputerId, int], int]:
    df = read_table(path, ANNEX_COLUMNS, {"computer": str})
    reboot = _int_column(df, "reboot_ms", path)
    pred = _int_column(df, "predicted_idle_ms", path)
    comps = [_lookup(fleet, n, path) for n in df["computer"]]
    return {(c, int(r)): int(p) for c, r, p in zip(comps, reboot, pred)}


def write_accuracy(path: Path, rows, fleet: Fleet) -> None:
    rows = list(rows)
    write_table(path, pd.DataFrame({
        "computer": [fleet.name(r.computer) for r in rows],
        "month": [r.month for r in rows],
        "model": [r.model for r in rows],
        "mse": [r.mse for r in rows],
        "r2": [r.r2 for r in rows],
    }, columns=ACCURACY_COLUMNS))


def read_accuracy(path: Path) -> pd.DataFrame:
    """Accuracy rows; ``r2`` is NaN where a month had constant actual idle times."""
    path = Path(path)
    if not path.exists():
        raise MissingInput(f"missing input file {path}")
    df = pd.read_csv(path, dtype={"computer": str, "month": str, "model": str})
    missing = [c for c in ACCURACY_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")
    return df[list(ACCURACY_COLUMNS)]


def finite_or_none(x: float):
    return x if x is not None and math.isfinite(x) else None
