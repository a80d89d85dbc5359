from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .core import ComputerId, EnergyProfile


class IllegalTransition(RuntimeError):
    pass


class MachineState(enum.Enum):
    USER_ACTIVE = "user_active"
    TASK_ACTIVE = "task_active"
    IDLE_AWAKE = "idle_awake"
    IDLE_SLEEP = "idle_sleep"
    REBOOTING = "rebooting"


S = MachineState
LEGAL_TRANSITIONS = {
    S.USER_ACTIVE: {S.IDLE_AWAKE},
    S.IDLE_AWAKE: {S.USER_ACTIVE, S.TASK_ACTIVE, S.IDLE_SLEEP, S.REBOOTING},
    S.IDLE_SLEEP: {S.USER_ACTIVE, S.TASK_ACTIVE, S.REBOOTING},
    S.TASK_ACTIVE: {S.IDLE_AWAKE, S.USER_ACTIVE, S.REBOOTING},
    S.REBOOTING: {S.IDLE_AWAKE},
}


@dataclass
class MachineRuntime:
    """Live state of one computer during a simulation.

    ``dwell`` accumulates integer milliseconds spent in each state; energy
    is derived from it at report time.
    """

    id: ComputerId
    profile: EnergyProfile
    state: MachineState = MachineState.IDLE_AWAKE
    last_logout: int = 0
    predicted_idle: int = 0
    state_entered_at: int = 0
    current_task: Optional[str] = None
    dwell: dict = field(default_factory=lambda: {s: 0 for s in MachineState})
    # bumped on every transition; stale timer events carry an old value
    token: int = 0
    schedulable_at: int = 0
    pending_reboot: bool = False
    user_waiting: bool = False
    waking: bool = False
    attempt_start: int = 0

    def rate(self, state: MachineState) -> float:
        if state is MachineState.IDLE_AWAKE:
            return self.profile.idle_w
        if state is MachineState.IDLE_SLEEP:
            return self.profile.sleep_w
        return self.profile.active_w

    def enter(self, state: MachineState, t: int) -> None:
        if state not in LEGAL_TRANSITIONS[self.state]:
            raise IllegalTransition(f"{self.id}: {self.state.name} -> {state.name} at {t}")
        self.dwell[self.state] += t - self.state_entered_at
        self.state = state
        self.state_entered_at = t
        self.token += 1

    def close(self, t: int) -> None:
        self.dwell[self.state] += t - self.state_entered_at
        self.state_entered_at = t

    def joules(self) -> dict:
        return {s: self.dwell[s] * self.rate(s) / 1000.0 for s in MachineState}
