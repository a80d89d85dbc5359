import itertools

import pytest

from voltsim.core import (MS_PER_MINUTE, MS_PER_SECOND, ClusterPolicy, ComputerId, EnergyProfile,
                          InteractiveSession, Outcome, Task)
from voltsim.machine import IllegalTransition, MachineRuntime, MachineState
from voltsim.simulator import ScheduleHorizonExceeded, run

MIN = MS_PER_MINUTE
A, B = ComputerId(0, 0), ComputerId(0, 1)
FLEET1 = {A: EnergyProfile(100, 50, 2)}
FLEET2 = {A: EnergyProfile(100, 50, 2), B: EnergyProfile(100, 50, 2)}
POLICY = ClusterPolicy()


def session(comp, login_min, logout_min, pred_min=0):
    return InteractiveSession(login_min * MIN, comp, logout_min * MIN), pred_min * MIN


def simulate(sessions, tasks, fleet=FLEET1, policy=POLICY, scheduler="random", end_min=600, **kw):
    return run(sessions, tasks, policy, scheduler, fleet=fleet, start=0, end=end_min * MIN, **kw)


def only(report):
    (t,) = report.tasks
    return t


class TestHandTraces:
    def test_single_task_on_empty_machine(self):
        rep = simulate([], [Task("t", 0, 10 * MIN)])
        t = only(rep)
        assert rep.productive_j == pytest.approx(100 * 600) and rep.wasted_j == 0
        assert t.finish == 10 * MIN
        assert rep.to_json()["meanOverheadMinutes"] == 0

    def test_user_occupies_whole_span(self):
        rep = simulate([session(A, 0, 601)], [Task("t", 0, 10 * MIN)])
        assert not only(rep).attempts
        assert rep.to_json()["tasksQueuedAtHorizon"] == 1

    def test_strict_mode_raises(self):
        with pytest.raises(ScheduleHorizonExceeded):
            simulate([session(A, 0, 601)], [Task("t", 0, 10 * MIN)], strict=True)

    def test_login_aborts_and_task_moves(self):
        # A is free first; B's user leaves after 5 min. A's user arrives at 10 min.
        sessions = [session(B, 0, 5, 1000), session(A, 10, 100)]
        rep = simulate(sessions, [Task("t", 0, 30 * MIN)], fleet=FLEET2)
        t = only(rep)
        assert [a.outcome for a in t.attempts] == [Outcome.ABORTED_LOGIN, Outcome.COMPLETED]
        assert [a.computer for a in t.attempts] == [A, B]
        assert t.attempts[0].end == 10 * MIN
        # B stays reserved through the two-minute logout grace
        assert t.attempts[1].start == 10 * MIN
        assert rep.wasted_j == pytest.approx(100 * 600)

    def test_reboot_aborts_task(self):
        policy = ClusterPolicy(reboot_schedule={A: [5 * MIN]})
        rep = simulate([], [Task("t", 0, 10 * MIN)], policy=policy)
        t = only(rep)
        assert t.attempts[0].outcome is Outcome.ABORTED_REBOOT
        assert t.attempts[1].start == 10 * MIN  # reboot lasts five minutes
        assert t.completed

    def test_reboot_during_session_waits_for_logout(self):
        policy = ClusterPolicy(reboot_schedule={A: [5 * MIN]})
        rep = simulate([session(A, 0, 20)], [Task("t", 0, 10 * MIN)], policy=policy)
        # reboot runs 20..25, then grace is already over
        assert only(rep).attempts[0].start == 25 * MIN

    def test_sleep_and_wake_latency(self):
        rep = simulate([], [Task("t", 30 * MIN, 10 * MIN)])
        att = only(rep).attempts[0]
        assert att.start == 30 * MIN + 30 * MS_PER_SECOND
        m = rep.machines[0]
        # waking is charged as task-active time; awake idle is 15 min before and after
        assert m.dwell[MachineState.TASK_ACTIVE] == 10 * MIN + 30 * MS_PER_SECOND
        assert m.dwell[MachineState.IDLE_AWAKE] == 30 * MIN

    def test_no_wake_when_forbidden(self):
        policy = ClusterPolicy(wake_allowed=False)
        rep = simulate([], [Task("t", 30 * MIN, 10 * MIN)], policy=policy)
        assert not only(rep).attempts

    def test_crystal_avoids_doomed_machine(self):
        sessions = [session(A, 20, 100), session(B, 0, 1)]
        rep = simulate(sessions, [Task("t", 5 * MIN, 30 * MIN)], fleet=FLEET2, scheduler="crystal")
        assert only(rep).attempts[0].computer == B
        assert rep.wasted_j == 0

    @pytest.mark.parametrize("pred_min, placed", [(42, True), (0, False)])
    def test_logout_sets_prediction(self, pred_min, placed):
        # the ML scheduler sees last logout 10 min + predicted idle
        rep = simulate([session(A, 0, 10, pred_min)], [Task("t", 20 * MIN, 5 * MIN)],
                       scheduler="ml:rf", end_min=60)
        assert bool(only(rep).attempts) is placed


class TestEnergyIdentities:
    def test_machine_energy_integrates_dwell(self):
        sessions = [session(A, 10, 40), session(B, 100, 130)]
        tasks = [Task(f"t{k}", k * 7 * MIN, 25 * MIN) for k in range(20)]
        rep = simulate(sessions, tasks, fleet=FLEET2, end_min=900)
        for m in rep.machines:
            assert sum(m.dwell.values()) == 900 * MIN
            assert sum(m.joules().values()) == pytest.approx(
                sum(m.dwell[s] * m.rate(s) / 1000 for s in MachineState), rel=1e-12)

    def test_accounting_identity(self):
        sessions = [session(A, 10, 40), session(B, 50, 55), session(A, 70, 90)]
        tasks = [Task(f"t{k}", k * 3 * MIN, 20 * MIN) for k in range(15)]
        doc = simulate(sessions, tasks, fleet=FLEET2).to_json()
        assert doc["totalHtcMWh"] == pytest.approx(doc["productiveMWh"] + doc["wastedMWh"], rel=1e-12)


class TestMachineStates:
    LEGAL = {
        (MachineState.USER_ACTIVE, MachineState.IDLE_AWAKE),
        (MachineState.IDLE_AWAKE, MachineState.USER_ACTIVE),
        (MachineState.IDLE_AWAKE, MachineState.TASK_ACTIVE),
        (MachineState.IDLE_AWAKE, MachineState.IDLE_SLEEP),
        (MachineState.IDLE_AWAKE, MachineState.REBOOTING),
        (MachineState.IDLE_SLEEP, MachineState.USER_ACTIVE),
        (MachineState.IDLE_SLEEP, MachineState.TASK_ACTIVE),
        (MachineState.IDLE_SLEEP, MachineState.REBOOTING),
        (MachineState.TASK_ACTIVE, MachineState.IDLE_AWAKE),
        (MachineState.TASK_ACTIVE, MachineState.USER_ACTIVE),
        (MachineState.TASK_ACTIVE, MachineState.REBOOTING),
        (MachineState.REBOOTING, MachineState.IDLE_AWAKE),
    }

    @pytest.mark.parametrize("src, dst", list(itertools.product(MachineState, MachineState)))
    def test_transition_table(self, src, dst):
        m = MachineRuntime(A, FLEET1[A], state=src)
        if (src, dst) in self.LEGAL:
            m.enter(dst, 5)
            assert m.dwell[src] == 5
        else:
            with pytest.raises(IllegalTransition):
                m.enter(dst, 5)
