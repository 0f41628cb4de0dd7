"""Run configuration: JSON ingestion, named presets and resolution.

A config file is one JSON object with up to four blocks, ``model``,
``schedule``, ``experiment`` and ``output``.  Every field has a default, so
``{}`` is a valid config.  A preset supplies the starting values and a
config file is merged over it field by field.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .errors import ConfigError
from .model import EngineModel
from .protocols import ENGINE_TYPES

INITIAL_STATES = ("excited", "ground", "mixed", "steady")
AXES = ("action", "gamma")
FORMATS = ("csv", "json")
FAULTS = (None, "trace_violation")


@dataclass
class ScheduleConfig:
    engines: list[str] = field(default_factory=lambda: list(ENGINE_TYPES))
    m: float = 1.0
    tau_cyc: float | None = None
    n_cycles: int = 10


@dataclass
class ExperimentConfig:
    axis: str = "action"
    # action sweep
    s_min: float = 1e-3
    s_max: float = 0.3
    n_points: int = 9
    # gamma sweep
    gamma_min: float = 1e-6
    gamma_max: float = 1e-1
    gamma_points: int = 31
    # signature
    m_values: list[float] = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])
    dephasings: list[str] = field(default_factory=lambda: ["none", "rate", "complete"])
    coherence_drive_periods: float = 100.0
    # transient / verify
    initial_state: str = "excited"
    srt_action: float = 0.05
    srt_constant: float = 7.5e-3
    transient_constant: float = 3e-3
    # judge transient gaps against the small-action tolerance of another preset
    gap_reference_preset: str | None = None
    n_permutations: int = 20
    n_random: int = 20
    seed: int = 0
    inject_fault: str | None = None


@dataclass
class OutputConfig:
    dir: str | None = None
    format: str = "csv"


@dataclass
class RunConfig:
    model: EngineModel = field(default_factory=EngineModel)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def tau_cyc(self) -> float:
        if self.schedule.tau_cyc is not None:
            return float(self.schedule.tau_cyc)
        return self.model.cycle_time(self.schedule.m)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "schedule": asdict(self.schedule),
            "experiment": asdict(self.experiment),
            "output": asdict(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"model", "schedule", "experiment", "output"}
        if unknown:
            raise ConfigError(f"unknown top-level block(s) {sorted(unknown)}")
        try:
            model = EngineModel.from_dict(_block(d, "model"))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from None
        cfg = cls(
            model=model,
            schedule=_dataclass_from(ScheduleConfig, _block(d, "schedule"), "schedule"),
            experiment=_dataclass_from(ExperimentConfig, _block(d, "experiment"), "experiment"),
            output=_dataclass_from(OutputConfig, _block(d, "output"), "output"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        s, e, o = self.schedule, self.experiment, self.output
        for et in s.engines:
            if et not in ENGINE_TYPES:
                raise ConfigError(f"schedule.engines: unknown engine {et!r}; expected {ENGINE_TYPES}")
        if not s.engines:
            raise ConfigError("schedule.engines: must list at least one engine")
        _positive("schedule.m", s.m)
        if s.tau_cyc is not None:
            _positive("schedule.tau_cyc", s.tau_cyc)
        if not isinstance(s.n_cycles, int) or s.n_cycles < 0:
            raise ConfigError("schedule.n_cycles: must be an integer >= 0")
        if e.axis not in AXES:
            raise ConfigError(f"experiment.axis: expected one of {AXES}, got {e.axis!r}")
        for name in ("s_min", "s_max", "gamma_min", "gamma_max", "srt_action", "srt_constant",
                     "transient_constant", "coherence_drive_periods"):
            _positive(f"experiment.{name}", getattr(e, name))
        if e.s_min > e.s_max or e.gamma_min > e.gamma_max:
            raise ConfigError("experiment: sweep minimum exceeds maximum")
        for name in ("n_points", "gamma_points", "n_permutations"):
            v = getattr(e, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"experiment.{name}: must be an integer >= 1")
        if not isinstance(e.n_random, int) or e.n_random < 0:
            raise ConfigError("experiment.n_random: must be an integer >= 0")
        for m in e.m_values:
            _positive("experiment.m_values", m)
        for dph in e.dephasings:
            if dph not in ("none", "rate", "complete"):
                raise ConfigError(f"experiment.dephasings: unknown mode {dph!r}")
        if e.initial_state not in INITIAL_STATES:
            raise ConfigError(
                f"experiment.initial_state: expected one of {INITIAL_STATES}, got {e.initial_state!r}")
        if e.gap_reference_preset is not None and e.gap_reference_preset not in PRESETS:
            raise ConfigError(
                f"experiment.gap_reference_preset: unknown preset {e.gap_reference_preset!r}")
        if e.inject_fault not in FAULTS:
            raise ConfigError(f"experiment.inject_fault: expected one of {FAULTS}")
        if o.format not in FORMATS:
            raise ConfigError(f"output.format: expected one of {FORMATS}, got {o.format!r}")


def _positive(name: str, v) -> None:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name}: must be a positive finite number, got {v!r}")


def _block(d: dict, name: str) -> dict:
    b = d.get(name, {})
    if not isinstance(b, dict):
        raise ConfigError(f"{name}: expected an object, got {type(b).__name__}")
    return b


def _dataclass_from(cls, d: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        obj = cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    for f in fields(cls):
        default = getattr(cls(), f.name)
        v = getattr(obj, f.name)
        if isinstance(default, list) and not isinstance(v, list):
            raise ConfigError(f"{where}.{f.name}: expected a list, got {v!r}")
        if isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{where}.{f.name}: expected a string, got {v!r}")
        if isinstance(default, (int, float)) and not isinstance(default, bool) and v is not None:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where}.{f.name}: expected a number, got {v!r}")
    return obj


PRESETS: dict[str, dict[str, Any]] = {
    "default": {},
    "fig6a": {
        "model": {"epsilon": 1e-4, "gamma_c": 1e-4, "gamma_h": 1e-4},
        "schedule": {"m": 20, "n_cycles": 10},
        "experiment": {"initial_state": "excited"},
    },
    "fig6b": {
        "model": {"epsilon": 5e-3, "gamma_c": 5e-3, "gamma_h": 5e-3},
        "schedule": {"m": 20, "n_cycles": 10},
        "experiment": {"initial_state": "excited", "gap_reference_preset": "fig6a"},
    },
    "fig7": {
        "experiment": {"axis": "action", "s_min": 1e-3, "s_max": 10.0, "n_points": 25},
    },
    "fig9": {
        "schedule": {"engines": ["continuous", "two_stroke", "four_stroke"]},
        "experiment": {"m_values": [1, 2, 5, 10, 20, 50, 100]},
    },
    "fig10": {
        "model": {"epsilon": 2e-4},
        "schedule": {"engines": ["continuous", "two_stroke", "four_stroke"], "m": 600},
        "experiment": {"axis": "gamma", "gamma_min": 1e-6, "gamma_max": 1e-1, "gamma_points": 31},
    },
}


def merge(base: dict, over: dict) -> dict:
    """Block-wise merge; fields in ``over`` replace those in ``base``."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_json(text: str, source: str = "<config>") -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_config(path: str | None = None, preset: str | None = None) -> RunConfig:
    """Resolve a preset (default ``"default"``) and an optional JSON file over it."""
    name = preset or "default"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    d = PRESETS[name]
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        d = merge(d, parse_json(text, path))
    return RunConfig.from_dict(d)
