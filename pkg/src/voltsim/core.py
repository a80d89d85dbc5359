"""Domain types shared across the simulator, plus trace validation and idle-gap derivation.

All times are integer milliseconds since the Unix epoch; all durations are
non-negative integer milliseconds.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

MS_PER_SECOND = 1000
MS_PER_MINUTE = 60 * MS_PER_SECOND
MS_PER_HOUR = 60 * MS_PER_MINUTE
MS_PER_DAY = 24 * MS_PER_HOUR
JOULES_PER_MWH = 3.6e9


class EmptyTrace(ValueError):
    """A computer has no sessions and no horizon to close against."""


class ComputerId(NamedTuple):
    cluster: int
    machine: int

    def __str__(self) -> str:
        return f"{self.cluster}:{self.machine}"


@dataclass(frozen=True)
class EnergyProfile:
    active_w: float
    idle_w: float
    sleep_w: float

    def __post_init__(self):
        if min(self.active_w, self.idle_w, self.sleep_w) < 0:
            raise ValueError("energy rates must be non-negative")
        if not self.sleep_w <= self.idle_w <= self.active_w:
            raise ValueError(
                f"expected sleep <= idle <= active watts, got "
                f"{self.sleep_w}, {self.idle_w}, {self.active_w}")


class SessionKind(enum.Enum):
    REAL = "real"
    REBOOT = "reboot"
    DENSIFY = "densify"


@dataclass(frozen=True, slots=True)
class InteractiveSession:
    login: int
    computer: ComputerId
    logout: int
    kind: SessionKind = SessionKind.REAL

    @property
    def duration(self) -> int:
        return self.logout - self.login


@dataclass(frozen=True, slots=True)
class IdleRecord:
    """A session annotated with the idle time that follows it."""

    session: InteractiveSession
    idle: int

    @property
    def computer(self) -> ComputerId:
        return self.session.computer

    @property
    def login(self) -> int:
        return self.session.login

    @property
    def logout(self) -> int:
        return self.session.logout

    @property
    def kind(self) -> SessionKind:
        return self.session.kind


class Outcome(enum.Enum):
    COMPLETED = "completed"
    ABORTED_LOGIN = "aborted_login"
    ABORTED_REBOOT = "aborted_reboot"


@dataclass(frozen=True, slots=True)
class Attempt:
    computer: ComputerId
    start: int
    end: int
    outcome: Outcome

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass
class Task:
    id: str
    submit: int
    duration: int
    attempts: list[Attempt] = field(default_factory=list)

    @property
    def run_before(self) -> bool:
        return bool(self.attempts)

    @property
    def max_previous_run(self) -> int:
        return max((a.duration for a in self.attempts), default=0)

    @property
    def finish(self) -> Optional[int]:
        if self.attempts and self.attempts[-1].outcome is Outcome.COMPLETED:
            return self.attempts[-1].end
        return None

    @property
    def completed(self) -> bool:
        return self.finish is not None


@dataclass(frozen=True)
class ClusterPolicy:
    """Cluster-wide operating rules.

    ``reboot_schedule`` maps each computer to its sorted reboot instants.
    """

    sleep_after: int = 15 * MS_PER_MINUTE
    logout_grace: int = 2 * MS_PER_MINUTE
    wake_allowed: bool = True
    wake_latency: int = 30 * MS_PER_SECOND
    reboot_duration: int = 5 * MS_PER_MINUTE
    reboot_schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sleep_after > self.logout_grace >= 0:
            raise ValueError("policy requires sleep_after > logout_grace >= 0")
        if self.wake_latency < 0 or self.reboot_duration < 0:
            raise ValueError("latencies must be non-negative")


@dataclass(frozen=True)
class OrderViolation:
    session: InteractiveSession


@dataclass(frozen=True)
class OverlapViolation:
    first: InteractiveSession
    second: InteractiveSession


def by_computer(sessions: Iterable[InteractiveSession]) -> dict[ComputerId, list[InteractiveSession]]:
    """Group sessions per computer, each list sorted by (login, logout)."""
    grouped = defaultdict(list)
    for s in sessions:
        grouped[s.computer].append(s)
    for lst in grouped.values():
        lst.sort(key=lambda s: (s.login, s.logout))
    return dict(grouped)


def validate_trace(sessions: Sequence[InteractiveSession]) -> list:
    """Return the list of ordering and overlap violations (empty when valid).

    Sessions touching end-to-start (logout == next login) do not overlap.
    """
    violations: list = [OrderViolation(s) for s in sessions if s.logout < s.login]
    for group in by_computer(s for s in sessions if s.logout >= s.login).values():
        # sweep: compare each session against the furthest-reaching earlier one
        reach = None
        for s in group:
            if reach is not None and s.login < reach.logout:
                violations.append(OverlapViolation(reach, s))
            if reach is None or s.logout > reach.logout:
                reach = s
    return violations


def idle_gaps(sessions: Iterable[InteractiveSession],
              horizon: Optional[int] = None,
              computers: Iterable[ComputerId] = ()) -> list[IdleRecord]:
    """Annotate every session with the idle time until the next login on its computer.

    The last session of each computer is closed against ``horizon``, which
    defaults to the latest logout in the trace.  Listing a computer in
    ``computers`` that has no sessions raises ``EmptyTrace`` when there is
    no horizon to close it against.
    """
    grouped = by_computer(sessions)
    if horizon is None:
        if not grouped:
            raise EmptyTrace("trace has no sessions and no horizon")
        horizon = max(s.logout for g in grouped.values() for s in g)
        for c in computers:
            if c not in grouped:
                raise EmptyTrace(f"computer {c} has no sessions and no horizon")
    out = []
    for comp in sorted(grouped):
        group = grouped[comp]
        for cur, nxt in zip(group, group[1:]):
            out.append(IdleRecord(cur, nxt.login - cur.logout))
        last = group[-1]
        out.append(IdleRecord(last, max(0, horizon - last.logout)))
    return out


@dataclass
class Fleet:
    """Name registry and energy profiles for every computer.

    Integer ids come from lexicographic order of cluster names, then of
    machine names within each cluster, so the encoding is stable across runs.
    """

    clusters: list[str]
    machines: dict[ComputerId, str]
    profiles: dict[int, EnergyProfile]

    @classmethod
    def from_names(cls, names: Iterable[str],
                   profiles: Mapping[str, EnergyProfile]) -> "Fleet":
        split = sorted({tuple(n.split("/", 1)) for n in names})
        for parts in split:
            if len(parts) != 2 or not all(parts):
                raise ValueError(f"computer name {'/'.join(parts)!r} is not cluster/machine")
        clusters = sorted({c for c, _ in split} | set(profiles))
        machines = {}
        for ci, cname in enumerate(clusters):
            for mi, mname in enumerate(sorted(m for c, m in split if c == cname)):
                machines[ComputerId(ci, mi)] = mname
        missing = [c for c in clusters if c not in profiles]
        if missing:
            raise ValueError(f"no energy profile for cluster(s) {missing}")
        return cls(clusters, machines,
                   {i: profiles[c] for i, c in enumerate(clusters)})

    def computers(self) -> list[ComputerId]:
        return sorted(self.machines)

    def name(self, cid: ComputerId) -> str:
        return f"{self.clusters[cid.cluster]}/{self.machines[cid]}"

    def lookup(self, name: str) -> ComputerId:
        try:
            return self._by_name[name]
        except AttributeError:
            self._by_name = {self.name(c): c for c in self.machines}
            return self._by_name[name]

    def energy(self) -> dict[ComputerId, EnergyProfile]:
        return {c: self.profiles[c.cluster] for c in self.machines}

    def in_cluster(self, cluster: int) -> list[ComputerId]:
        return [c for c in self.computers() if c.cluster == cluster]
