"""Single JSON configuration covering generation, policy, training and simulation."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .core import MS_PER_MINUTE, MS_PER_SECOND, ClusterPolicy
from .preprocess import ALL_FEATURES, DEFAULT_FEATURES, TermCalendar, parse_month
from .predictors.forest import ForestConfig
from .predictors.mlp import MlpConfig
from .predictors.monthly import TrainSettings
from .schedulers import SCHEDULER_NAMES
from .tracegen import BurstSpec, FleetSpec, GeneratorSpec, SeasonalitySpec

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def parse_months(text: str) -> tuple[tuple[int, int], tuple[int, int]]:
    """"YYYY-MM:YYYY-MM" (or a single month) to an ordered pair."""
    try:
        parts = text.split(":")
        if len(parts) not in (1, 2):
            raise ValueError
        first = parse_month(parts[0])
        last = parse_month(parts[-1])
    except ValueError:
        raise ConfigError(f"month range {text!r} is not YYYY-MM[:YYYY-MM]") from None
    if last < first:
        raise ConfigError(f"month range {text!r} ends before it starts")
    return first, last


@dataclass(frozen=True)
class PolicySettings:
    sleep_after_min: float = 15.0
    logout_grace_min: float = 2.0
    wake_allowed: bool = True
    wake_latency_s: float = 30.0
    reboot_duration_min: float = 5.0

    def build(self, reboot_schedule: Optional[dict] = None) -> ClusterPolicy:
        return ClusterPolicy(
            sleep_after=round(self.sleep_after_min * MS_PER_MINUTE),
            logout_grace=round(self.logout_grace_min * MS_PER_MINUTE),
            wake_allowed=self.wake_allowed,
            wake_latency=round(self.wake_latency_s * MS_PER_SECOND),
            reboot_duration=round(self.reboot_duration_min * MS_PER_MINUTE),
            reboot_schedule=dict(reboot_schedule or {}),
        )


@dataclass(frozen=True)
class TrainingSettings:
    delta_min: float = 10.0
    # inclusive target-month range, "YYYY-MM:YYYY-MM"
    months: str = "2010-02:2010-06"
    features: tuple[str, ...] = DEFAULT_FEATURES
    forest: ForestConfig = ForestConfig()
    mlp: MlpConfig = MlpConfig()
    # constant prediction for computers without history; None = fleet median
    fallback_ms: Optional[float] = None

    def __post_init__(self):
        if self.delta_min <= 0:
            raise ConfigError("delta_min must be positive")
        unknown = set(self.features) - set(ALL_FEATURES)
        if unknown or not self.features:
            raise ConfigError(f"unknown or empty feature list: {sorted(unknown)}")
        self.month_range()

    def month_range(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return parse_months(self.months)

    def settings(self, tz: str, seed: int, delta_min: Optional[float] = None) -> TrainSettings:
        delta = self.delta_min if delta_min is None else delta_min
        return TrainSettings(delta=round(delta * MS_PER_MINUTE), features=tuple(self.features),
                             forest=self.forest, mlp=self.mlp, tz=tz, seed=seed,
                             fallback=self.fallback_ms)


@dataclass(frozen=True)
class SimulationSettings:
    schedulers: tuple[str, ...] = SCHEDULER_NAMES
    strict: bool = False

    def __post_init__(self):
        bad = [s for s in self.schedulers if s not in SCHEDULER_NAMES]
        if bad:
            raise ConfigError(f"unknown scheduler(s) {bad}; choose from {list(SCHEDULER_NAMES)}")


@dataclass(frozen=True)
class Config:
    seed: int = 0
    generator: GeneratorSpec = GeneratorSpec()
    policy: PolicySettings = PolicySettings()
    training: TrainingSettings = TrainingSettings()
    simulation: SimulationSettings = SimulationSettings()

    @classmethod
    def from_dict(cls, doc: dict) -> "Config":
        doc = dict(doc)
        version = doc.pop("schemaVersion", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config schema version {version!r}, expected {CONFIG_VERSION}")
        return _build(cls, doc, "config")

    @classmethod
    def load(cls, path: Optional[str | Path]) -> "Config":
        if path is None:
            return cls()
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {"schemaVersion": CONFIG_VERSION, **_plain(self)}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _plain(obj) -> Any:
    if isinstance(obj, TermCalendar):
        return json.loads(obj.to_json())
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(x) for x in obj]
    return obj


def _build(cls, doc: dict, where: str):
    """Instantiate dataclass ``cls`` from a JSON object, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name, value in doc.items():
        kwargs[name] = _convert(hints[name], value, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _convert(hint, value, where: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
        return _convert(hint, value, where)
    if hint is TermCalendar:
        try:
            return TermCalendar.from_json(json.dumps(value))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, where)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        inner = args[0] if args else Any
        return tuple(_convert(inner, v, where) for v in value)
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is bool and isinstance(value, bool):
        return value
    if hint is str and isinstance(value, str):
        return value
    if hint is Any:
        return value
    raise ConfigError(f"{where}: {value!r} does not match {getattr(hint, '__name__', hint)}")


__all__ = ["Config", "ConfigError", "PolicySettings", "TrainingSettings", "SimulationSettings",
           "parse_months", "FleetSpec", "SeasonalitySpec", "BurstSpec", "GeneratorSpec"]
