"""Turn interactive traces into ML-ready rows.

Steps, in pipeline order: split idle periods at scheduled reboots, densify
sparse idle periods with shifted synthetic records, extract calendar
features from the logout time, scale by fixed per-feature maxima, and split
by target month.
"""

from __future__ import annotations

import bisect
import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from .core import (ComputerId, IdleRecord, InteractiveSession, SessionKind,
                   by_computer)

ALL_FEATURES = (
    "epochLogin", "epochLogout", "activeDuration", "minute", "hourOfDay",
    "dayOfWeek", "dayOfMonth", "month", "year", "termWeeks", "term",
    "clusterIndex", "machineIndex",
)
DEFAULT_FEATURES = (
    "epochLogin", "epochLogout", "activeDuration", "hourOfDay",
    "dayOfWeek", "dayOfMonth", "month",
)
FIXED_DIVISORS = {
    "minute": 59.0, "hourOfDay": 23.0, "dayOfWeek": 7.0, "dayOfMonth": 31.0,
    "month": 12.0, "termWeeks": 10.0, "term": 3.0,
}
# divisors learned from the training span
DATA_DIVISORS = ("epochLogin", "epochLogout", "activeDuration", "year",
                 "clusterIndex", "machineIndex")


class CalendarError(ValueError):
    pass


class MissingDivisor(KeyError):
    pass


class EmptyTrainSet(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    index: int
    start: dt.date
    end: dt.date  # inclusive


@dataclass(frozen=True)
class TermCalendar:
    terms: tuple[Term, ...]

    def __post_init__(self):
        ordered = sorted(self.terms, key=lambda t: t.start)
        for t in ordered:
            if not 1 <= t.index <= 3:
                raise CalendarError(f"term index {t.index} outside 1..3")
            if t.end < t.start:
                raise CalendarError(f"term {t} ends before it starts")
            if (t.end - t.start).days + 1 > 70:
                raise CalendarError(f"term {t} spans more than 10 weeks")
        for a, b in zip(ordered, ordered[1:]):
            if b.start <= a.end:
                raise CalendarError(f"terms {a} and {b} overlap")
        object.__setattr__(self, "terms", tuple(ordered))

    @classmethod
    def from_json(cls, text: str) -> "TermCalendar":
        items = json.loads(text)
        return cls(tuple(Term(int(it["term"]), dt.date.fromisoformat(it["start"]),
                              dt.date.fromisoformat(it["end"])) for it in items))

    def to_json(self) -> str:
        return json.dumps([{"term": t.index, "start": t.start.isoformat(),
                            "end": t.end.isoformat()} for t in self.terms], indent=2)

    def locate(self, day: dt.date) -> tuple[int, int]:
        """(term, week-of-term), or (-1, -1) outside every term."""
        for t in self.terms:
            if t.start <= day <= t.end:
                return t.index, (day - t.start).days // 7 + 1
        return -1, -1


@dataclass(frozen=True)
class FeatureVector:
    epochLogin: int
    epochLogout: int
    activeDuration: int
    minute: int
    hourOfDay: int
    dayOfWeek: int
    dayOfMonth: int
    month: int
    year: int
    termWeeks: int
    term: int
    clusterIndex: int
    machineIndex: int

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in ALL_FEATURES], dtype=float)


@dataclass(frozen=True)
class ScalingSpec:
    divisors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.divisors.items():
            if not v > 0:
                raise ValueError(f"divisor for {k} must be positive, got {v}")

    @classmethod
    def identity(cls, features: Sequence[str] = ALL_FEATURES) -> "ScalingSpec":
        return cls({f: 1.0 for f in features})

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "ScalingSpec":
        """Fixed calendar maxima plus data maxima of a full-width training matrix."""
        div = dict(FIXED_DIVISORS)
        for name in DATA_DIVISORS:
            col = matrix[:, ALL_FEATURES.index(name)] if len(matrix) else np.zeros(1)
            div[name] = float(col.max()) if col.size and col.max() > 0 else 1.0
        return cls(div)

    def vector(self, features: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.divisors[f] for f in features], dtype=float)
        except KeyError as exc:
            raise MissingDivisor(exc.args[0]) from None


def split_on_reboots(sessions: Iterable[InteractiveSession],
                     reboot_schedule: Mapping[ComputerId, Sequence[int]]) -> list[InteractiveSession]:
    """Insert a zero-length synthetic session at every reboot that lands in idle time.

    A reboot at an instant covered by a user session (login <= r <= logout)
    is postponed until logout and adds nothing.  Reboots before the first or
    after the last session still split idle time, so a computer with no
    users at all ends up with only reboot sessions.
    """
    grouped = by_computer(sessions)
    out: list[InteractiveSession] = []
    for comp in sorted(set(grouped) | set(reboot_schedule)):
        group = grouped.get(comp, [])
        logins = [s.login for s in group]
        for r in sorted(set(reboot_schedule.get(comp, ()))):
            i = bisect.bisect_right(logins, r) - 1
            if i >= 0 and group[i].login <= r <= group[i].logout:
                continue
            out.append(InteractiveSession(r, comp, r, SessionKind.REBOOT))
        out.extend(group)
    out.sort(key=lambda s: (s.computer, s.login, s.logout))
    return out


def densify_counts(idle: np.ndarray, delta: int) -> np.ndarray:
    """Number of synthetic records each idle period spawns."""
    idle = np.asarray(idle, dtype=np.int64)
    n = idle // delta
    return n - ((idle % delta == 0) & (n > 0))


def densify_arrays(idle: np.ndarray, delta: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised densification: (source row index, shift multiple k) per synthetic."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    counts = densify_counts(idle, delta)
    src = np.repeat(np.arange(len(counts)), counts)
    # k runs 1..count within each source row
    offsets = np.cumsum(counts) - counts
    k = np.arange(len(src)) - np.repeat(offsets, counts) + 1
    return src, k.astype(np.int64)


def densify(records: Sequence[IdleRecord], delta: int) -> list[IdleRecord]:
    """Append shifted synthetic records every ``delta`` ms through each idle period.

    A synthetic is a zero-length pseudo-session at logout + k*delta whose
    target is the residual idle time; zero residuals are dropped.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    out = list(records)
    for rec in records:
        for k in range(1, rec.idle // delta + 1):
            residual = rec.idle - k * delta
            if residual <= 0:
                continue
            t = rec.logout + k * delta
            out.append(IdleRecord(
                InteractiveSession(t, rec.computer, t, SessionKind.DENSIFY), residual))
    return out


def _zone(tz: str) -> ZoneInfo:
    return ZoneInfo(tz)


def extract_features(record: IdleRecord | InteractiveSession,
                     calendar: TermCalendar, tz: str = "UTC") -> FeatureVector:
    if not calendar.terms:
        raise CalendarError("calendar has no terms")
    s = record.session if isinstance(record, IdleRecord) else record
    when = dt.datetime.fromtimestamp(s.logout / 1000, tz=_zone(tz))
    term, week = calendar.locate(when.date())
    return FeatureVector(
        epochLogin=s.login, epochLogout=s.logout, activeDuration=s.logout - s.login,
        minute=when.minute, hourOfDay=when.hour, dayOfWeek=when.isoweekday(),
        dayOfMonth=when.day, month=when.month, year=when.year,
        termWeeks=week, term=term,
        clusterIndex=s.computer.cluster, machineIndex=s.computer.machine,
    )


def feature_matrix(login: np.ndarray, logout: np.ndarray, cluster: np.ndarray,
                   machine: np.ndarray, calendar: TermCalendar,
                   tz: str = "UTC") -> np.ndarray:
    """Vectorised ``extract_features``; columns follow ``ALL_FEATURES``."""
    if not calendar.terms:
        raise CalendarError("calendar has no terms")
    login = np.asarray(login, dtype=np.int64)
    logout = np.asarray(logout, dtype=np.int64)
    stamps = pd.DatetimeIndex(pd.to_datetime(logout, unit="ms", utc=True)).tz_convert(tz)
    days = stamps.tz_localize(None).normalize().values.astype("datetime64[D]")
    term = np.full(len(logout), -1, dtype=np.int64)
    week = np.full(len(logout), -1, dtype=np.int64)
    for t in calendar.terms:
        start, end = np.datetime64(t.start, "D"), np.datetime64(t.end, "D")
        inside = (days >= start) & (days <= end)
        term[inside] = t.index
        week[inside] = (days[inside] - start).astype(np.int64) // 7 + 1
    cols = [
        login, logout, logout - login,
        stamps.minute.values, stamps.hour.values, stamps.dayofweek.values + 1,
        stamps.day.values, stamps.month.values, stamps.year.values,
        week, term, np.broadcast_to(cluster, logout.shape),
        np.broadcast_to(machine, logout.shape),
    ]
    return np.column_stack([np.asarray(c, dtype=float) for c in cols]) if len(logout) \
        else np.zeros((0, len(ALL_FEATURES)))


def scale_and_select(vec: FeatureVector | np.ndarray, spec: ScalingSpec,
                     features: Sequence[str] = DEFAULT_FEATURES) -> np.ndarray:
    """Select ``features`` (in the given order) and divide each by its divisor.

    Accepts one FeatureVector or a full-width matrix with ``ALL_FEATURES`` columns.
    """
    div = spec.vector(features)
    if isinstance(vec, FeatureVector):
        return np.array([getattr(vec, f) for f in features], dtype=float) / div
    cols = [ALL_FEATURES.index(f) for f in features]
    return np.asarray(vec, dtype=float)[..., cols] / div


def month_start(year: int, month: int, tz: str = "UTC") -> int:
    """First instant of a calendar month, in epoch milliseconds."""
    year, month = year + (month - 1) // 12, (month - 1) % 12 + 1
    start = dt.datetime(year, month, 1, tzinfo=_zone(tz))
    return int(start.timestamp() * 1000)


def month_bounds(year: int, month: int, tz: str = "UTC") -> tuple[int, int]:
    return month_start(year, month, tz), month_start(year, month + 1, tz)


def parse_month(text: str) -> tuple[int, int]:
    y, m = text.split("-")
    if not 1 <= int(m) <= 12:
        raise ValueError(f"bad month {text!r}")
    return int(y), int(m)


def month_range(first: tuple[int, int], last: tuple[int, int]) -> list[tuple[int, int]]:
    out = []
    y, m = first
    while (y, m) <= last:
        out.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


def monthly_split(records: Sequence[IdleRecord], target: tuple[int, int],
                  tz: str = "UTC") -> tuple[list[IdleRecord], list[IdleRecord]]:
    """Train on everything logged out before the target month; predict within it.

    Densification synthetics never enter the prediction set.
    """
    lo, hi = month_bounds(*target, tz)
    train = [r for r in records if r.logout < lo]
    if not train:
        raise EmptyTrainSet(f"no records before {target[0]}-{target[1]:02d}")
    predict = [r for r in records
               if lo <= r.logout < hi and r.kind is not SessionKind.DENSIFY]
    return train, predict


def calendar_from_terms(terms: Iterable[tuple[int, str, str]]) -> TermCalendar:
    return TermCalendar(tuple(Term(i, dt.date.fromisoformat(a), dt.date.fromisoformat(b))
                              for i, a, b in terms))


def default_calendar(first_year: int = 2009, last_year: Optional[int] = None) -> TermCalendar:
    """Three ten-week terms per academic year starting in October."""
    last_year = first_year if last_year is None else last_year
    terms = []
    for y in range(first_year - 1, last_year + 1):
        terms += [
            Term(1, _monday_on_or_after(dt.date(y, 10, 1)), None),
            Term(2, _monday_on_or_after(dt.date(y + 1, 1, 8)), None),
            Term(3, _monday_on_or_after(dt.date(y + 1, 4, 20)), None),
        ]
    return TermCalendar(tuple(Term(t.index, t.start, t.start + dt.timedelta(days=67))
                              for t in terms))


def _monday_on_or_after(day: dt.date) -> dt.date:
    return day + dt.timedelta(days=(7 - day.weekday()) % 7)
