import numpy as np
import pytest

from voltsim.core import MS_PER_MINUTE, Attempt, ComputerId, EnergyProfile, Outcome, Task
from voltsim.machine import MachineRuntime, MachineState
from voltsim.schedulers import (NotIdle, crystal_place, make_scheduler, ml_place,
                                predicted_idle_remaining, random_place)

MIN = MS_PER_MINUTE
PROFILE = EnergyProfile(100, 50, 2)


def machine(idx, remaining_min=0, state=MachineState.IDLE_AWAKE, t=0, watts=100):
    """A machine whose predicted idle time left at ``t`` is ``remaining_min``."""
    return MachineRuntime(ComputerId(0, idx), EnergyProfile(watts, 50, 2), state=state,
                          last_logout=t, predicted_idle=remaining_min * MIN)


def task(duration_min=10, previous_min=()):
    attempts = [Attempt(ComputerId(9, 9), 0, p * MIN, Outcome.ABORTED_LOGIN) for p in previous_min]
    return Task("t", 0, duration_min * MIN, attempts)


def alg1_oracle(p, idle, sleep):
    """Line-by-line transcription: longest idle if > p, else longest sleeping if > p, else null."""
    c = max(idle, key=lambda x: x[1], default=None)
    if c is not None and c[1] > p:
        return c[0]
    c = max(sleep, key=lambda x: x[1], default=None)
    if c is not None and c[1] > p:
        return c[0]
    return None


ALG1_TABLE = [
    # (previous run, idle remaining, sleeping remaining, expected)
    (0, {"a": 5, "b": 30}, {}, "b"),
    (40, {"a": 35}, {"s": 60}, "s"),
    (40, {"a": 35}, {"s": 20}, None),
    (40, {"a": 40}, {"s": 40}, None),
    (0, {}, {"s": 1}, "s"),
    (0, {}, {}, None),
]


@pytest.mark.parametrize("p, idle, sleep, expected", ALG1_TABLE)
def test_ml_place_table(p, idle, sleep, expected):
    ids = {name: k for k, name in enumerate(list(idle) + list(sleep))}
    idle_m = [machine(ids[n], r) for n, r in idle.items()]
    sleep_m = [machine(ids[n], r, MachineState.IDLE_SLEEP) for n, r in sleep.items()]
    got = ml_place(0, task(previous_min=[p] if p else []), idle_m, sleep_m)
    oracle = alg1_oracle(p * MIN, [(n, r * MIN) for n, r in idle.items()],
                         [(n, r * MIN) for n, r in sleep.items()])
    assert oracle == expected
    assert (None if got is None else got.id.machine) == (None if expected is None else ids[expected])


def test_ml_place_never_returns_machine_at_or_below_p():
    rng = np.random.default_rng(0)
    for _ in range(500):
        p = int(rng.integers(0, 60))
        idle = [machine(k, int(rng.integers(0, 60))) for k in range(3)]
        sleep = [machine(3 + k, int(rng.integers(0, 60)), MachineState.IDLE_SLEEP) for k in range(2)]
        m = ml_place(0, task(previous_min=[p]), idle, sleep)
        if m is not None:
            assert predicted_idle_remaining(m, 0) > p * MIN


def test_ties_prefer_lower_power_then_id():
    a, b, c = machine(2, 30, watts=120), machine(1, 30, watts=90), machine(0, 30, watts=90)
    assert ml_place(0, task(), [a, b, c], []) is c


class TestPredictedRemaining:
    def test_formula(self):
        m = MachineRuntime(ComputerId(0, 0), PROFILE, last_logout=1_000_000, predicted_idle=600_000)
        assert predicted_idle_remaining(m, 1_200_000) == 400_000
        assert predicted_idle_remaining(m, 1_000_000) == 600_000
        assert predicted_idle_remaining(m, 5_000_000) == 0

    def test_busy_machine(self):
        with pytest.raises(NotIdle):
            predicted_idle_remaining(machine(0, 5, MachineState.USER_ACTIVE), 0)


class TestRandomPlace:
    rng = np.random.default_rng(0)

    def test_singleton(self):
        a = machine(0)
        assert random_place(task(), [a], [], self.rng) is a

    def test_sleep_fallback(self):
        b = machine(1, state=MachineState.IDLE_SLEEP)
        assert random_place(task(), [], [b], self.rng) is b
        assert random_place(task(), [], [b], self.rng, wake_allowed=False) is None

    def test_empty(self):
        assert random_place(task(), [], [], self.rng) is None

    def test_uniform(self):
        pool = [machine(k) for k in range(4)]
        rng = np.random.default_rng(1)
        hits = np.bincount([random_place(task(), pool, [], rng).id.machine for _ in range(4000)])
        assert hits.min() > 850


class TestCrystalPlace:
    def test_best_fit(self):
        ms = [machine(k) for k in range(3)]
        rem = {0: 8 * MIN, 1: 12 * MIN, 2: 50 * MIN}
        assert crystal_place(task(10), ms, [], lambda m: rem[m.id.machine]) is ms[1]

    def test_nothing_fits(self):
        ms = [machine(0)]
        assert crystal_place(task(10), ms, [], lambda m: 9 * MIN) is None

    def test_sleeping_needs_wake_latency(self):
        s = machine(0, state=MachineState.IDLE_SLEEP)
        assert crystal_place(task(10), [], [s], lambda m: 10 * MIN, wake_latency=1) is None
        assert crystal_place(task(10), [], [s], lambda m: 10 * MIN + 1, wake_latency=1) is s

    def test_longest_task_first(self):
        sched = make_scheduler("crystal")
        short, long_ = Task("a", 0, 5 * MIN), Task("b", 0, 30 * MIN)
        sched.enqueue(short, 0)
        sched.enqueue(long_, 0)
        assert [t.id for t in sched.queued()] == ["b", "a"]


def test_unknown_scheduler():
    with pytest.raises(ValueError):
        make_scheduler("ml:median")
