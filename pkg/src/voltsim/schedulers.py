"""Task placement policies: random baseline, clairvoyant best fit, and predicted idle time.

The ``*_place`` functions are pure decisions over candidate machine lists.
The scheduler classes own the task queue and are driven by the simulator,
which asks for one placement at a time until none is possible.
"""

from __future__ import annotations

import bisect
import enum
import itertools
from collections import deque
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Task
from .machine import MachineRuntime, MachineState

# ml:<variant> names accepted on the command line
ML_VARIANTS = ("rf", "mlp", "max", "min", "avg", "lastmonth", "bestavg")
SCHEDULER_NAMES = ("random", "crystal") + tuple(f"ml:{v}" for v in ML_VARIANTS)


class NotIdle(RuntimeError):
    pass


class QueueDiscipline(enum.Enum):
    FIFO = "fifo"
    LONGEST_DURATION_FIRST = "longest_first"


def tie_key(m: MachineRuntime):
    return (m.profile.active_w, m.id)


def random_place(task: Task, idle: Sequence[MachineRuntime], sleep: Sequence[MachineRuntime],
                 rng: np.random.Generator, wake_allowed: bool = True) -> Optional[MachineRuntime]:
    """Uniform over idle machines, else uniform over sleeping ones when waking is allowed."""
    for pool in (idle, sleep if wake_allowed else ()):
        if pool:
            ordered = sorted(pool, key=lambda m: m.id)
            return ordered[int(rng.integers(len(ordered)))]
    return None


def crystal_place(task: Task, idle: Sequence[MachineRuntime], sleep: Sequence[MachineRuntime],
                  remaining: Callable[[MachineRuntime], int],
                  wake_latency: int = 0) -> Optional[MachineRuntime]:
    """Best fit: the machine with the least true remaining idle time that still fits the task.

    Sleeping machines are used only when no idle one fits, and must also
    cover the wake latency.
    """
    for pool, need in ((idle, task.duration), (sleep, task.duration + wake_latency)):
        fits = [(remaining(m), tie_key(m), m) for m in pool]
        fits = [f for f in fits if f[0] >= need]
        if fits:
            return min(fits, key=lambda f: f[:2])[2]
    return None


def predicted_idle_remaining(machine: MachineRuntime, t: int) -> int:
    """Predicted idle time left: last logout + predicted idle - t, floored at zero."""
    if machine.state not in (MachineState.IDLE_AWAKE, MachineState.IDLE_SLEEP):
        raise NotIdle(f"{machine.id} is {machine.state.name}")
    return max(0, machine.last_logout + machine.predicted_idle - t)


def find_longest_idle(machines: Sequence[MachineRuntime], t: int) -> Optional[tuple[int, MachineRuntime]]:
    """Machine with the longest predicted remaining idle; ties prefer lower power, then id."""
    best = None
    for m in machines:
        key = (-predicted_idle_remaining(m, t), tie_key(m))
        if best is None or key < best[0]:
            best = (key, m)
    return None if best is None else (-best[0][0], best[1])


def ml_place(t: int, task: Task, idle: Sequence[MachineRuntime],
             sleep: Sequence[MachineRuntime]) -> Optional[MachineRuntime]:
    """Place on the longest-predicted-idle machine if it outlasts the task's longest failed run."""
    p = task.max_previous_run if task.run_before else 0
    for pool in (idle, sleep):
        found = find_longest_idle(pool, t)
        if found is not None and found[0] > p:
            return found[1]
    return None


class Scheduler:
    """Queue owner; ``next_placement`` is called until it returns None."""

    name = "base"
    discipline = QueueDiscipline.FIFO

    def __init__(self):
        self._queue: dict = {}

    def enqueue(self, task: Task, t: int) -> None:
        self._queue[task.id] = task

    def queued(self) -> list[Task]:
        return list(self._queue.values())

    def __len__(self) -> int:
        return len(self._queue)

    def _take(self, task: Task) -> None:
        del self._queue[task.id]

    def next_placement(self, t: int, sim) -> Optional[tuple[Task, MachineRuntime]]:
        raise NotImplementedError


class RandomScheduler(Scheduler):
    name = "random"

    def __init__(self, seed: int = 0):
        super().__init__()
        self.rng = np.random.default_rng(seed)

    def next_placement(self, t, sim):
        if not self._queue:
            return None
        task = next(iter(self._queue.values()))
        m = random_place(task, sim.idle_machines(), sim.sleeping_machines(), self.rng,
                         sim.policy.wake_allowed)
        if m is None:
            return None
        self._take(task)
        return task, m


class MLScheduler(Scheduler):
    def __init__(self, variant: str = "min"):
        super().__init__()
        self.variant = variant
        self.name = f"ml:{variant}"

    def next_placement(self, t, sim):
        if not self._queue:
            return None
        idle = sim.idle_machines()
        sleep = sim.sleeping_machines()
        best = [f[0] for f in (find_longest_idle(idle, t), find_longest_idle(sleep, t)) if f]
        bound = max(best, default=0)
        if bound <= 0:
            return None
        for task in self._queue.values():
            # a task is placeable iff some candidate outlasts its longest failed run
            if task.max_previous_run >= bound:
                continue
            m = ml_place(t, task, idle, sleep)
            self._take(task)
            return task, m
        return None


class CrystalScheduler(Scheduler):
    """Clairvoyant: knows task durations and every machine's true remaining idle time."""

    name = "crystal"
    discipline = QueueDiscipline.LONGEST_DURATION_FIRST

    def __init__(self):
        super().__init__()
        self._keys: list = []
        self._seq = itertools.count()

    def enqueue(self, task, t):
        super().enqueue(task, t)
        bisect.insort(self._keys, (-task.duration, next(self._seq), task.id))

    def queued(self):
        return [self._queue[k[2]] for k in self._keys]

    def next_placement(self, t, sim):
        if not self._keys:
            return None
        idle = sim.idle_machines()
        sleep = sim.sleeping_machines()
        latency = sim.policy.wake_latency
        rem = [sim.true_remaining(m, t) for m in idle]
        rem += [sim.true_remaining(m, t) - latency for m in sleep]
        if not rem:
            return None
        reach = max(rem)
        i = bisect.bisect_left(self._keys, (-reach,))
        if i == len(self._keys):
            return None
        task = self._queue[self._keys[i][2]]
        m = crystal_place(task, idle, sleep, lambda mc: sim.true_remaining(mc, t), latency)
        del self._keys[i]
        self._take(task)
        return task, m


def make_scheduler(name: str, seed: int = 0) -> Scheduler:
    if name == "random":
        return RandomScheduler(seed)
    if name == "crystal":
        return CrystalScheduler()
    if name.startswith("ml:") and name[3:] in ML_VARIANTS:
        return MLScheduler(name[3:])
    raise ValueError(f"unknown scheduler {name!r}; choose from {', '.join(SCHEDULER_NAMES)}")
