"""Seeded synthetic workloads: seasonal interactive use, bursty tasks, reboots.

All distributions here are invented stand-ins for a real campus trace.
Interactive sessions arrive as a Poisson count per machine-day whose rate
is shaped by term time, weekday and a per-cluster usage level; session
lengths are lognormal.  Tasks arrive in bursts whose members share a
duration scale, which is what makes the duration sequence autocorrelated.
"""

from __future__ import annotations

import bisect
import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .core import (MS_PER_DAY, MS_PER_HOUR, MS_PER_MINUTE, ComputerId, EnergyProfile, Fleet,
                   InteractiveSession, Task)
from .io import Bundle
from .preprocess import TermCalendar, default_calendar, month_start

# relative login intensity per hour of day
DEFAULT_DIURNAL = (0.05, 0.03, 0.02, 0.02, 0.02, 0.05, 0.2, 0.6, 1.6, 2.6, 2.8, 2.6,
                   2.3, 2.6, 2.7, 2.5, 2.1, 1.5, 1.0, 0.8, 0.7, 0.5, 0.3, 0.1)


class InfeasibleRates(ValueError):
    """The configured rates would keep a machine busy more than all of the time."""


@dataclass(frozen=True)
class FleetSpec:
    cluster_count: int = 5
    machines_per_cluster: int = 10
    active_w: tuple[float, float] = (90.0, 140.0)
    idle_w: tuple[float, float] = (45.0, 70.0)
    sleep_w: tuple[float, float] = (1.0, 4.0)
    # cluster k uses usage[k % len(usage)]: busy labs down to a near-unused room
    usage: tuple[float, ...] = (1.5, 1.0, 0.7, 0.4, 0.05)

    def __post_init__(self):
        if self.cluster_count <= 0 or self.machines_per_cluster <= 0:
            raise ValueError("fleet needs at least one cluster and one machine per cluster")
        for name in ("active_w", "idle_w", "sleep_w"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} range {lo}..{hi} is invalid")
        if not self.usage or min(self.usage) < 0:
            raise ValueError("usage multipliers must be non-negative")

    def cluster_usage(self, cluster: int) -> float:
        return self.usage[cluster % len(self.usage)]

    def build(self, seed: int = 0) -> Fleet:
        """Named fleet with one energy profile per cluster drawn from the ranges."""
        rng = np.random.default_rng([seed, 0xF1EE7])
        width = max(2, len(str(self.cluster_count - 1)))
        mwidth = max(3, len(str(self.machines_per_cluster - 1)))
        profiles = {}
        names = []
        for c in range(self.cluster_count):
            cname = f"lab{c:0{width}d}"
            sleep, idle, active = (rng.uniform(*getattr(self, k))
                                   for k in ("sleep_w", "idle_w", "active_w"))
            idle = max(idle, sleep)
            profiles[cname] = EnergyProfile(round(max(active, idle), 1), round(idle, 1),
                                            round(sleep, 2))
            names += [f"{cname}/pc{m:0{mwidth}d}" for m in range(self.machines_per_cluster)]
        return Fleet.from_names(names, profiles)


@dataclass(frozen=True)
class SeasonalitySpec:
    calendar: TermCalendar = field(default_factory=default_calendar)
    logins_per_day: float = 5.0
    term_multiplier: float = 1.0
    out_of_term_multiplier: float = 0.45
    weekday_multiplier: float = 1.0
    weekend_multiplier: float = 0.2
    diurnal: tuple[float, ...] = DEFAULT_DIURNAL
    session_median_min: float = 35.0
    session_sigma: float = 0.9
    max_session_min: float = 600.0
    # per-machine lognormal spread of the login rate
    machine_spread: float = 0.3
    # weekly timetable: slot start hours, and the chance a cluster books a
    # weekday slot (scaled by the cluster's usage); in-term weekdays only
    class_slots_h: tuple[float, ...] = (9.0, 11.0, 14.0, 16.0)
    class_length_min: float = 110.0
    class_booking: float = 0.5
    class_attendance: float = 0.85
    occupancy_ceiling: float = 0.85
    min_gap_ms: int = MS_PER_MINUTE
    tz: str = "UTC"

    def __post_init__(self):
        rates = (self.logins_per_day, self.term_multiplier, self.out_of_term_multiplier,
                 self.weekday_multiplier, self.weekend_multiplier)
        if min(rates) < 0 or min(self.diurnal) < 0:
            raise ValueError("rates and multipliers must be non-negative")
        if len(self.diurnal) != 24 or sum(self.diurnal) <= 0:
            raise ValueError("diurnal profile needs 24 non-negative weights with a positive sum")
        if self.session_median_min <= 0 or self.session_sigma < 0:
            raise ValueError("session length distribution is invalid")
        if not (0 <= self.class_booking and 0 <= self.class_attendance <= 1):
            raise ValueError("class booking and attendance must be probabilities")
        if self.class_length_min < 0 or any(not 0 <= h < 24 for h in self.class_slots_h):
            raise ValueError("class slots must start within the day and have non-negative length")
        if not 0 < self.occupancy_ceiling <= 1:
            raise ValueError("occupancy ceiling must lie in (0, 1]")

    def mean_session_ms(self) -> float:
        m = self.session_median_min * math.exp(self.session_sigma ** 2 / 2)
        return min(m, self.max_session_min) * MS_PER_MINUTE


@dataclass(frozen=True)
class BurstSpec:
    # many small bursts: a burst much larger than the fleet leaves a
    # scheduler no choice of machine at all
    bursts_per_day: float = 18.0
    burst_size_mean: float = 3.0
    burst_size_sigma: float = 0.8
    fixed_burst_size: Optional[int] = None
    # tasks of one burst are submitted within this many minutes
    submit_spread_min: float = 30.0
    # bursts start inside this daily window (hours, UTC)
    submit_hours: tuple[float, float] = (8.0, 20.0)
    # (median minutes, weight) of the duration regimes a burst can belong to
    regimes: tuple[tuple[float, float], ...] = ((12.0, 0.55), (70.0, 0.45))
    regime_order: str = "random"
    burst_sigma: float = 0.5
    within_sigma: float = 0.3
    min_duration_ms: int = MS_PER_MINUTE
    max_duration_min: float = 600.0

    def __post_init__(self):
        if self.fixed_burst_size is not None and self.fixed_burst_size < 1:
            raise ValueError("burst size must be at least 1")
        if self.burst_size_mean < 1 or self.bursts_per_day < 0:
            raise ValueError("bursts need a non-negative rate and mean size >= 1")
        if not self.regimes or any(m <= 0 or w < 0 for m, w in self.regimes):
            raise ValueError("regimes need positive medians and non-negative weights")
        if self.regime_order not in ("random", "cycle"):
            raise ValueError(f"regime_order must be 'random' or 'cycle', not {self.regime_order!r}")
        lo, hi = self.submit_hours
        if not 0 <= lo < hi <= 24:
            raise ValueError(f"submit window {lo}..{hi} must lie within one day")


@dataclass(frozen=True)
class GeneratorSpec:
    start: str = "2010-01-01"
    months: int = 6
    fleet: FleetSpec = FleetSpec()
    seasonality: SeasonalitySpec = SeasonalitySpec()
    bursts: BurstSpec = BurstSpec()
    reboot_cadence_h: float = 24.0
    reboot_at: str = "03:00"
    reboot_cluster_offset_min: float = 0.0

    def span(self) -> tuple[int, int]:
        day = dt.date.fromisoformat(self.start)
        lo = month_start(day.year, day.month, self.seasonality.tz) + \
            (day.day - 1) * MS_PER_DAY
        y, m = divmod(day.month - 1 + self.months, 12)
        hi = month_start(day.year + y, m + 1, self.seasonality.tz) + (day.day - 1) * MS_PER_DAY
        return lo, hi


def _day_starts(span: tuple[int, int], tz: str) -> np.ndarray:
    lo = pd.Timestamp(span[0], unit="ms", tz="UTC").tz_convert(tz).normalize()
    hi = pd.Timestamp(span[1], unit="ms", tz="UTC").tz_convert(tz)
    days = pd.date_range(lo, hi, freq="D")
    return (days.tz_convert("UTC").asi8 // 1_000_000).astype(np.int64)


def day_profile(seasonality: SeasonalitySpec, day_starts: np.ndarray):
    """(weekday index, in-term flag) for each day start."""
    local = pd.to_datetime(day_starts, unit="ms", utc=True).tz_convert(seasonality.tz)
    weekday = np.asarray(local.dayofweek)
    in_term = np.array([seasonality.calendar.locate(d.date())[0] > 0 for d in local], dtype=bool)
    return weekday, in_term


def daily_rates(seasonality: SeasonalitySpec, day_starts: np.ndarray) -> np.ndarray:
    """Expected drop-in logins per day for a machine of unit usage, for each day start."""
    s = seasonality
    weekday, in_term = day_profile(s, day_starts)
    rate = np.full(len(day_starts), s.logins_per_day)
    rate *= np.where(weekday >= 5, s.weekend_multiplier, s.weekday_multiplier)
    rate *= np.where(in_term, s.term_multiplier, s.out_of_term_multiplier)
    return rate


def timetable(seasonality: SeasonalitySpec, usage: float, rng: np.random.Generator) -> np.ndarray:
    """Booked (weekday, slot) pairs for one cluster, shape (5, slots)."""
    p = min(1.0, seasonality.class_booking * usage)
    return rng.random((5, len(seasonality.class_slots_h))) < p


def _class_sessions(s: SeasonalitySpec, booked: np.ndarray, day_starts, weekday, in_term,
                    rng: np.random.Generator) -> list[tuple[int, int]]:
    out = []
    length = int(s.class_length_min * MS_PER_MINUTE)
    for day, wd, term in zip(day_starts.tolist(), weekday.tolist(), in_term.tolist()):
        if not term or wd >= 5:
            continue
        for k, hour in enumerate(s.class_slots_h):
            if not booked[wd, k] or rng.random() >= s.class_attendance:
                continue
            a = day + int(hour * MS_PER_HOUR) + int(rng.integers(0, 10 * MS_PER_MINUTE))
            b = day + int(hour * MS_PER_HOUR) + length - int(rng.integers(0, 15 * MS_PER_MINUTE))
            if b > a:
                out.append((a, b))
    return out


def _machine_sessions(comp: ComputerId, usage: float, s: SeasonalitySpec,
                      day_starts: np.ndarray, base_rate: np.ndarray,
                      span: tuple[int, int], rng: np.random.Generator,
                      booked: Optional[np.ndarray] = None, weekday=None,
                      in_term=None) -> list[InteractiveSession]:
    fixed = [] if booked is None else _class_sessions(s, booked, day_starts, weekday, in_term, rng)
    factor = usage * rng.lognormal(0.0, s.machine_spread) if s.machine_spread else usage
    counts = rng.poisson(base_rate * factor)
    total = int(counts.sum())
    weights = np.asarray(s.diurnal, dtype=float)
    hours = rng.choice(24, size=total, p=weights / weights.sum())
    login = (np.repeat(day_starts, counts) + hours * MS_PER_HOUR
             + rng.integers(0, MS_PER_HOUR, size=total))
    length = rng.lognormal(math.log(s.session_median_min * MS_PER_MINUTE), s.session_sigma, total)
    length = np.minimum(length, s.max_session_min * MS_PER_MINUTE).astype(np.int64)

    # timetabled sessions are placed first; a drop-in login is kept only if
    # the machine is free from then until its logout
    taken = sorted((a, min(b, span[1])) for a, b in fixed if span[0] <= a < span[1])
    starts = [a for a, _ in taken]
    drop_ins = sorted(zip(login.tolist(), length.tolist()))
    accepted = []
    for a, d in drop_ins:
        b = min(a + d, span[1])
        if a < span[0] or b <= a:
            continue
        j = bisect.bisect_right(starts, a)
        gap = s.min_gap_ms
        if j > 0 and taken[j - 1][1] + gap > a:
            continue
        if j < len(taken) and b + gap > taken[j][0]:
            continue
        if accepted and accepted[-1][1] + gap > a:
            continue
        accepted.append((a, b))
    merged = sorted(taken + accepted)
    out = [InteractiveSession(a, comp, b) for a, b in merged]
    return _cap_occupancy(out, s.occupancy_ceiling, span, rng)


def _cap_occupancy(sessions, ceiling, span, rng):
    window = span[1] - span[0]
    busy = sum(x.duration for x in sessions)
    if busy <= ceiling * window:
        return sessions
    keep = list(sessions)
    for i in rng.permutation(len(sessions)):
        busy -= sessions[i].duration
        keep[i] = None
        if busy <= ceiling * window:
            break
    return [x for x in keep if x is not None]


def gen_interactive(fleet: Fleet, seasonality: SeasonalitySpec, span: tuple[int, int],
                    seed: int = 0, usage: Optional[Sequence[float]] = None) -> list[InteractiveSession]:
    """Non-overlapping login sessions for every machine over ``span`` (ms).

    ``usage`` gives a rate multiplier per cluster index (default 1 for all).
    """
    s = seasonality
    if span[1] - span[0] < 2 * 28 * MS_PER_DAY:
        raise ValueError("span must cover at least two months")
    days = _day_starts(span, s.tz)
    base = daily_rates(s, days)
    weekday, in_term = day_profile(s, days)
    mult = [1.0] * len(fleet.clusters) if usage is None else list(usage)
    peak = float(base.max(initial=0.0)) * max(mult, default=0.0)
    class_share = len(s.class_slots_h) * s.class_length_min * MS_PER_MINUTE / MS_PER_DAY
    occupancy = peak * s.mean_session_ms() / MS_PER_DAY + class_share
    if occupancy > 1.0:
        raise InfeasibleRates(f"expected occupancy {occupancy:.0%} on the busiest day")
    tables = {c: timetable(s, mult[c], np.random.default_rng([seed, 3, c]))
              for c in range(len(fleet.clusters))}
    out = []
    for comp in fleet.computers():
        rng = np.random.default_rng([seed, 1, comp.cluster, comp.machine])
        out += _machine_sessions(comp, mult[comp.cluster], s, days, base, span, rng,
                                 tables[comp.cluster], weekday, in_term)
    out.sort(key=lambda x: (x.login, x.computer))
    return out


def _burst_starts(rng: np.random.Generator, n: int, lo: int, hi: int,
                  hours: tuple[float, float]) -> np.ndarray:
    """Uniform instants in [lo, hi] restricted to a daily window of hours."""
    w0, w1 = (int(h * MS_PER_HOUR) for h in hours)
    first_day = lo - lo % MS_PER_DAY
    days = (hi - first_day) // MS_PER_DAY + 1
    out = np.empty(0, dtype=np.int64)
    # draw over the open hours of every day, rejecting the few before lo or after hi
    for _ in range(200):
        if len(out) >= n:
            return out[:n]
        u = rng.integers(0, days * (w1 - w0), size=2 * (n - len(out)) + 8)
        t = first_day + (u // (w1 - w0)) * MS_PER_DAY + w0 + u % (w1 - w0)
        out = np.concatenate([out, t[(t >= lo) & (t <= hi)]])
    raise ValueError("the task span barely overlaps the daily submit window")


def gen_tasks(bursts: BurstSpec, span: tuple[int, int], seed: int = 0) -> list[Task]:
    """Bursty task submissions with burst-correlated durations, ordered by submit time."""
    rng = np.random.default_rng([seed, 2])
    days = (span[1] - span[0]) / MS_PER_DAY
    n_bursts = max(1, int(rng.poisson(bursts.bursts_per_day * days)))
    spread = int(bursts.submit_spread_min * MS_PER_MINUTE)
    latest = max(span[0], span[1] - spread - 1)
    starts = np.sort(_burst_starts(rng, n_bursts, span[0], latest, bursts.submit_hours))
    medians = np.array([m for m, _ in bursts.regimes], dtype=float)
    weights = np.array([w for _, w in bursts.regimes], dtype=float)
    if bursts.regime_order == "cycle":
        regime = np.arange(n_bursts) % len(medians)
    else:
        regime = rng.choice(len(medians), size=n_bursts, p=weights / weights.sum())
    cap = bursts.max_duration_min * MS_PER_MINUTE

    submit, duration = [], []
    for b in range(n_bursts):
        if bursts.fixed_burst_size is not None:
            size = bursts.fixed_burst_size
        else:
            mu = math.log(bursts.burst_size_mean) - bursts.burst_size_sigma ** 2 / 2
            size = max(1, int(round(rng.lognormal(mu, bursts.burst_size_sigma))))
        centre = medians[regime[b]] * MS_PER_MINUTE * rng.lognormal(0.0, bursts.burst_sigma)
        d = rng.lognormal(math.log(centre), bursts.within_sigma, size)
        # whole seconds keep the CSV compact
        d = np.clip(np.round(d / 1000) * 1000, bursts.min_duration_ms, cap).astype(np.int64)
        s = starts[b] + np.sort(rng.integers(0, spread + 1, size=size))
        submit.append(s)
        duration.append(d)
    submit = np.concatenate(submit)
    duration = np.concatenate(duration)
    order = np.argsort(submit, kind="stable")
    width = len(str(len(order)))
    return [Task(f"t{i:0{width}d}", int(submit[j]), int(duration[j]))
            for i, j in enumerate(order)]


def gen_reboots(fleet: Fleet, cadence_ms: int, span: tuple[int, int], at_ms: int = 3 * MS_PER_HOUR,
                cluster_offset_ms: int = 0) -> dict[str, list[int]]:
    """Periodic reboot instants per cluster name.

    The first reboot of cluster k falls at the first ``at_ms`` past midnight
    (UTC) on or after the span start, shifted by ``k * cluster_offset_ms``.
    """
    if cadence_ms <= 0:
        raise ValueError("reboot cadence must be positive")
    out = {}
    first_day = span[0] - span[0] % MS_PER_DAY
    for k, name in enumerate(fleet.clusters):
        t = first_day + at_ms + k * cluster_offset_ms
        while t < span[0]:
            t += cadence_ms
        out[name] = list(range(t, span[1], cadence_ms))
    return out


def generate_bundle(spec: GeneratorSpec = GeneratorSpec(), seed: int = 0) -> Bundle:
    """A complete synthetic trace bundle from one seed."""
    span = spec.span()
    fleet = spec.fleet.build(seed)
    usage = [spec.fleet.cluster_usage(c) for c in range(len(fleet.clusters))]
    sessions = gen_interactive(fleet, spec.seasonality, span, seed, usage)
    tasks = gen_tasks(spec.bursts, span, seed)
    hh, mm = (int(x) for x in spec.reboot_at.split(":"))
    reboots = gen_reboots(fleet, int(spec.reboot_cadence_h * MS_PER_HOUR), span,
                          hh * MS_PER_HOUR + mm * MS_PER_MINUTE,
                          int(spec.reboot_cluster_offset_min * MS_PER_MINUTE))
    return Bundle(fleet, sessions, tasks, reboots, spec.seasonality.calendar, span[0], span[1],
                  spec.seasonality.tz, {"seed": seed})
