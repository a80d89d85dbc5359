"""Deterministic discrete-event replay of primary users, reboots and HTC tasks.

Events at equal times are processed in ``EventKind`` order, then by
insertion order.  Scheduling runs once after all events sharing a
timestamp, so a login always wins against a placement at the same instant.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .core import (JOULES_PER_MWH, MS_PER_MINUTE, Attempt, ClusterPolicy,
                   ComputerId, EnergyProfile, InteractiveSession, Outcome, Task)
from .machine import MachineRuntime, MachineState
from .schedulers import Scheduler, make_scheduler


_FOREVER = 2**62


class WakeForbidden(RuntimeError):
    pass


class ScheduleHorizonExceeded(RuntimeError):
    pass


class EventKind(enum.IntEnum):
    """Value doubles as the priority among events at the same instant."""

    TASK_COMPLETE = 0
    USER_LOGOUT = 1
    USER_LOGIN = 2
    REBOOT_START = 3
    REBOOT_END = 4
    WAKE_COMPLETE = 5
    SLEEP_TIMEOUT = 6
    GRACE_END = 7
    TASK_SUBMIT = 8


@dataclass(frozen=True, order=True)
class SimEvent:
    """Logged form of a processed event; the queue itself holds plain tuples."""

    time: int
    kind: EventKind
    ordinal: int
    machine: int = -1
    payload: object = field(default=None, compare=False)
    token: int = field(default=-1, compare=False)


@dataclass
class EnergyAccumulator:
    """HTC energy per task, split into completed and aborted attempts (joules)."""

    productive: dict = field(default_factory=lambda: defaultdict(float))
    wasted: dict = field(default_factory=lambda: defaultdict(float))

    def charge(self, task_id: str, attempt: Attempt, watts: float) -> None:
        joules = attempt.duration * watts / 1000.0
        if attempt.outcome is Outcome.COMPLETED:
            self.productive[task_id] += joules
        else:
            self.wasted[task_id] += joules


@dataclass
class SimulationReport:
    scheduler: str
    start: int
    end: int
    tasks: list[Task]
    machines: list[MachineRuntime]
    task_productive_j: dict
    task_wasted_j: dict
    events_processed: int = 0

    @property
    def productive_j(self) -> float:
        return math.fsum(self.task_productive_j.get(t.id, 0.0) for t in self.tasks)

    @property
    def wasted_j(self) -> float:
        return math.fsum(self.task_wasted_j.get(t.id, 0.0) for t in self.tasks)

    @property
    def total_htc_j(self) -> float:
        return self.productive_j + self.wasted_j

    @property
    def completed(self) -> list[Task]:
        return [t for t in self.tasks if t.completed]

    @property
    def incomplete(self) -> list[Task]:
        return [t for t in self.tasks if not t.completed]

    def to_json(self) -> dict:
        from .analysis import mean_overhead

        done = self.completed
        prod, waste = self.productive_j, self.wasted_j
        total = prod + waste
        return {
            "scheduler": self.scheduler,
            "startMs": self.start,
            "endMs": self.end,
            "meanOverheadMinutes": mean_overhead(done) if done else None,
            "totalHtcMWh": total / JOULES_PER_MWH,
            "productiveMWh": prod / JOULES_PER_MWH,
            "wastedMWh": waste / JOULES_PER_MWH,
            "totalHtcJ": total,
            "productiveJ": prod,
            "wastedJ": waste,
            "tasksCompleted": len(done),
            "tasksQueuedAtHorizon": len(self.tasks) - len(done),
            "abortedAttempts": sum(a.outcome is not Outcome.COMPLETED
                                   for t in self.tasks for a in t.attempts),
            "perMachine": [_machine_json(m) for m in self.machines],
            "perTask": [_task_json(t, self.task_productive_j.get(t.id, 0.0),
                                   self.task_wasted_j.get(t.id, 0.0)) for t in self.tasks],
        }


def _machine_json(m: MachineRuntime) -> dict:
    joules = m.joules()
    return {
        "computer": [m.id.cluster, m.id.machine],
        "dwellMs": {s.value: m.dwell[s] for s in MachineState},
        "joules": {s.value: joules[s] for s in MachineState},
        "totalJ": math.fsum(joules.values()),
    }


def _task_json(t: Task, prod: float, waste: float) -> dict:
    return {
        "id": t.id,
        "submitMs": t.submit,
        "durationMs": t.duration,
        "finishMs": t.finish,
        "overheadMinutes": None if t.finish is None
        else (t.finish - t.submit - t.duration) / MS_PER_MINUTE,
        "productiveJ": prod,
        "wastedJ": waste,
        "attempts": [{"computer": [a.computer.cluster, a.computer.machine],
                      "startMs": a.start, "endMs": a.end, "outcome": a.outcome.value}
                     for a in t.attempts],
    }


class Simulation:
    """One replay.  Use :func:`run` unless stepping through events by hand."""

    def __init__(self, fleet: Mapping[ComputerId, EnergyProfile], policy: ClusterPolicy,
                 scheduler: Scheduler, start: int, end: int,
                 initial_prediction: int = 0, event_log: Optional[list] = None):
        self.policy = policy
        self.scheduler = scheduler
        self.start, self.end = start, end
        self.machines = [MachineRuntime(c, fleet[c], last_logout=start,
                                        predicted_idle=initial_prediction,
                                        state_entered_at=start, schedulable_at=start)
                         for c in sorted(fleet)]
        self.index = {m.id: i for i, m in enumerate(self.machines)}
        self._idle: dict[int, None] = {}
        self._asleep: dict[int, None] = {}
        self._heap: list = []
        self._ordinal = itertools.count()
        self.tasks: dict[str, Task] = {}
        self.energy = EnergyAccumulator()
        self.annex: dict = {}
        self.event_log = event_log
        self._logins: dict[int, list[int]] = defaultdict(list)
        self._reboots: dict[int, list[int]] = defaultdict(list)
        self.processed = 0
        self._dirty = False
        for i in range(len(self.machines)):
            self._push(start + policy.sleep_after, EventKind.SLEEP_TIMEOUT, i, token=0)
            self._idle[i] = None

    # -- candidate sets -------------------------------------------------
    def idle_machines(self) -> list[MachineRuntime]:
        return [self.machines[i] for i in self._idle]

    def sleeping_machines(self) -> list[MachineRuntime]:
        if not self.policy.wake_allowed:
            return []
        return [self.machines[i] for i in self._asleep]

    def true_remaining(self, m: MachineRuntime, t: int) -> int:
        """Time until the next login or reboot on ``m`` (clairvoyant)."""
        i = self.index[m.id]
        nxt = _FOREVER
        for times in (self._logins[i], self._reboots[i]):
            j = bisect.bisect_left(times, t)
            if j < len(times):
                nxt = min(nxt, times[j])
        return nxt - t

    # -- loading --------------------------------------------------------
    def _push(self, time, kind, machine=-1, payload=None, token=-1):
        heapq.heappush(self._heap, (time, int(kind), next(self._ordinal), machine, payload, token))

    def load_sessions(self, annotated: Sequence[tuple[InteractiveSession, int]]) -> None:
        for s, pred in annotated:
            if s.logout <= self.start or s.login >= self.end:
                continue
            i = self.index[s.computer]
            login = max(s.login, self.start)
            self._push(login, EventKind.USER_LOGIN, i)
            self._logins[i].append(login)
            if s.logout < self.end:
                self._push(s.logout, EventKind.USER_LOGOUT, i, int(pred))
        for times in self._logins.values():
            times.sort()

    def load_reboots(self, schedule: Mapping[ComputerId, Sequence[int]],
                     annex: Optional[Mapping[tuple[ComputerId, int], int]] = None) -> None:
        self.annex = dict(annex or {})
        for comp, times in schedule.items():
            if comp not in self.index:
                continue
            i = self.index[comp]
            for r in sorted(set(times)):
                if self.start <= r < self.end:
                    self._push(r, EventKind.REBOOT_START, i, r)
                    self._reboots[i].append(r)

    def load_tasks(self, tasks: Sequence[Task]) -> None:
        for t in tasks:
            if self.start <= t.submit < self.end:
                task = Task(t.id, t.submit, t.duration)
                self.tasks[task.id] = task
                self._push(task.submit, EventKind.TASK_SUBMIT, payload=task.id)

    # -- transitions ----------------------------------------------------
    def _set_idle(self, i: int, t: int) -> None:
        m = self.machines[i]
        m.enter(MachineState.IDLE_AWAKE, t)
        self._push(t + self.policy.sleep_after, EventKind.SLEEP_TIMEOUT, i, token=m.token)
        if t >= m.schedulable_at:
            self._idle[i] = None
            self._dirty = True
        else:
            self._push(m.schedulable_at, EventKind.GRACE_END, i, token=m.token)

    def _leave_pools(self, i: int) -> None:
        self._idle.pop(i, None)
        self._asleep.pop(i, None)

    def _stop_task(self, i: int, t: int, outcome: Outcome) -> None:
        m = self.machines[i]
        task = self.tasks[m.current_task]
        if not m.waking:
            att = Attempt(m.id, m.attempt_start, t, outcome)
            task.attempts.append(att)
            self.energy.charge(task.id, att, m.profile.active_w)
        m.current_task = None
        m.waking = False
        if outcome is not Outcome.COMPLETED:
            self.scheduler.enqueue(task, t)
            self._dirty = True

    def _reboot(self, i: int, t: int) -> None:
        m = self.machines[i]
        m.enter(MachineState.REBOOTING, t)
        self._push(t + self.policy.reboot_duration, EventKind.REBOOT_END, i, token=m.token)

    def _place(self, task: Task, m: MachineRuntime, t: int) -> None:
        i = self.index[m.id]
        asleep = m.state is MachineState.IDLE_SLEEP
        if asleep and not self.policy.wake_allowed:
            raise WakeForbidden(f"{m.id} is asleep and waking is disabled")
        self._leave_pools(i)
        m.enter(MachineState.TASK_ACTIVE, t)
        m.current_task = task.id
        if asleep:
            m.waking = True
            self._push(t + self.policy.wake_latency, EventKind.WAKE_COMPLETE, i, token=m.token)
        else:
            m.attempt_start = t
            self._push(t + task.duration, EventKind.TASK_COMPLETE, i, token=m.token)

    def _handle(self, t, kind, i, payload, token) -> None:
        m = self.machines[i] if i >= 0 else None
        S = MachineState
        if kind == EventKind.TASK_SUBMIT:
            self.scheduler.enqueue(self.tasks[payload], t)
            self._dirty = True
        elif kind == EventKind.USER_LOGIN:
            if m.state is S.REBOOTING:
                m.user_waiting = True
                return
            if m.state is S.TASK_ACTIVE:
                self._stop_task(i, t, Outcome.ABORTED_LOGIN)
            self._leave_pools(i)
            m.enter(S.USER_ACTIVE, t)
        elif kind == EventKind.USER_LOGOUT:
            m.last_logout = t
            m.predicted_idle = payload
            m.schedulable_at = t + self.policy.logout_grace
            if m.state is S.REBOOTING:
                m.user_waiting = False
                return
            if m.pending_reboot:
                m.pending_reboot = False
                m.enter(S.IDLE_AWAKE, t)
                self._reboot(i, t)
            else:
                self._set_idle(i, t)
        elif kind == EventKind.REBOOT_START:
            if m.state is S.USER_ACTIVE:
                m.pending_reboot = True
                return
            if m.state is S.REBOOTING:
                return
            if (m.id, payload) in self.annex:
                m.last_logout = payload
                m.predicted_idle = self.annex[(m.id, payload)]
            if m.state is S.TASK_ACTIVE:
                self._stop_task(i, t, Outcome.ABORTED_REBOOT)
            self._leave_pools(i)
            self._reboot(i, t)
        elif kind == EventKind.REBOOT_END:
            if token != m.token:
                return
            if m.user_waiting:
                m.user_waiting = False
                m.enter(S.IDLE_AWAKE, t)
                m.enter(S.USER_ACTIVE, t)
            else:
                self._set_idle(i, t)
        elif kind == EventKind.WAKE_COMPLETE:
            if token != m.token:
                return
            m.waking = False
            m.attempt_start = t
            self._push(t + self.tasks[m.current_task].duration, EventKind.TASK_COMPLETE, i,
                       token=m.token)
        elif kind == EventKind.TASK_COMPLETE:
            if token != m.token:
                return
            self._stop_task(i, t, Outcome.COMPLETED)
            self._set_idle(i, t)
        elif kind == EventKind.SLEEP_TIMEOUT:
            if token != m.token or m.state is not S.IDLE_AWAKE:
                return
            self._idle.pop(i, None)
            m.enter(S.IDLE_SLEEP, t)
            self._asleep[i] = None
        elif kind == EventKind.GRACE_END:
            if token != m.token or m.state is not S.IDLE_AWAKE:
                return
            self._idle[i] = None
            self._dirty = True

    def _dispatch(self, t: int) -> None:
        while len(self.scheduler):
            placement = self.scheduler.next_placement(t, self)
            if placement is None:
                return
            task, m = placement
            self._place(task, m, t)

    def run(self) -> SimulationReport:
        heap = self._heap
        while heap and heap[0][0] < self.end:
            t, kind, ordinal, i, payload, token = heapq.heappop(heap)
            kind = EventKind(kind)
            self._handle(t, kind, i, payload, token)
            self.processed += 1
            if self.event_log is not None:
                self.event_log.append(SimEvent(t, kind, ordinal, i, payload, token))
            if self._dirty and (not heap or heap[0][0] != t):
                self._dirty = False
                self._dispatch(t)
        for m in self.machines:
            m.close(self.end)
        return SimulationReport(
            scheduler=self.scheduler.name, start=self.start, end=self.end,
            tasks=sorted(self.tasks.values(), key=lambda x: (x.submit, x.id)),
            machines=self.machines,
            task_productive_j=dict(self.energy.productive),
            task_wasted_j=dict(self.energy.wasted),
            events_processed=self.processed,
        )


def run(annotated: Sequence[tuple[InteractiveSession, int]], tasks: Sequence[Task],
        policy: ClusterPolicy, scheduler: str | Scheduler, *,
        fleet: Mapping[ComputerId, EnergyProfile],
        annex: Optional[Mapping[tuple[ComputerId, int], int]] = None,
        start: Optional[int] = None, end: Optional[int] = None, seed: int = 0,
        strict: bool = False, initial_prediction: int = 0,
        event_log: Optional[list] = None) -> SimulationReport:
    """Replay ``annotated`` sessions (each with its predicted idle time) and ``tasks``.

    Reboots come from ``policy.reboot_schedule``; ``annex`` maps
    (computer, reboot instant) to the idle time predicted after that reboot.
    The window defaults to the span of the sessions and task submissions.
    With ``strict`` set, tasks still unfinished at ``end`` raise
    ScheduleHorizonExceeded instead of being reported as queued.
    """
    if isinstance(scheduler, str):
        scheduler = make_scheduler(scheduler, seed)
    if start is None:
        start = min([s.login for s, _ in annotated] + [t.submit for t in tasks])
    if end is None:
        end = max([s.logout for s, _ in annotated] + [t.submit + t.duration for t in tasks]) + 1
    sim = Simulation(fleet, policy, scheduler, start, end, initial_prediction, event_log)
    sim.load_sessions(annotated)
    sim.load_reboots(policy.reboot_schedule, annex)
    sim.load_tasks(tasks)
    report = sim.run()
    if strict and report.incomplete:
        raise ScheduleHorizonExceeded(
            f"{len(report.incomplete)} task(s) unfinished at horizon {end}")
    return report
