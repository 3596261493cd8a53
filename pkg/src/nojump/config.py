"""Run configuration: JSON documents with strict, typo-rejecting parsing."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .qcore import SystemParams


class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


@dataclass(frozen=True)
class TimeGrid:
    horizon: float = 6.0      # us
    dt: float = 1e-3          # integrator step, us
    record_dt: float = 0.05   # output grid spacing, us

    def __post_init__(self) -> None:
        if self.horizon <= 0 or self.dt <= 0 or self.record_dt <= 0:
            raise ConfigError("horizon, dt and record_dt must be positive")

    def record_times(self) -> np.ndarray:
        n = int(self.horizon / self.record_dt + 1e-9)
        times = np.arange(n + 1) * self.record_dt
        if times[-1] < self.horizon - 1e-12:
            times = np.append(times, self.horizon)
        return times


@dataclass(frozen=True)
class SweepGrid:
    lo: float
    hi: float
    steps: int

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError("sweep steps must be >= 1")
        if self.hi < self.lo:
            raise ConfigError("sweep grid must be ascending (min <= max)")

    def values(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    time: TimeGrid
    sweep: SweepGrid | None
    shots: int = 4096
    seed: int = 1
    mode: str = "ideal"          # "ideal" | "measured"
    output_dir: str = "."

    def __post_init__(self) -> None:
        if self.shots < 0:
            raise ConfigError("shots must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.mode not in ("ideal", "measured"):
            raise ConfigError(f"mode must be 'ideal' or 'measured', got {self.mode!r}")

    def to_dict(self) -> dict:
        out = {
            "params": dataclasses.asdict(self.params),
            "time": dataclasses.asdict(self.time),
            "shots": self.shots,
            "seed": self.seed,
            "mode": self.mode,
            "output_dir": self.output_dir,
        }
        if self.sweep is not None:
            out["sweep"] = {"min": self.sweep.lo, "max": self.sweep.hi,
                            "steps": self.sweep.steps}
        return out


def _require_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path}")


def _number(section: dict, key: str, path: str, default):
    value = section.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key} must be a number, got {value!r}")
    return value


def config_from_dict(doc: dict, defaults: RunConfig) -> RunConfig:
    """Merge a parsed JSON document over per-command defaults.

    Unknown keys anywhere are hard errors so a typo in a physics parameter
    cannot silently fall back to a default.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _require_keys(doc, {"params", "time", "sweep", "shots", "seed", "mode", "output_dir"},
                  "config")

    params = defaults.params
    if "params" in doc:
        sec = doc["params"]
        if not isinstance(sec, dict):
            raise ConfigError("config.params must be an object")
        _require_keys(sec, {"gamma_e", "gamma_f", "J", "Delta"}, "config.params")
        try:
            params = SystemParams(
                gamma_e=_number(sec, "gamma_e", "config.params", params.gamma_e),
                gamma_f=_number(sec, "gamma_f", "config.params", params.gamma_f),
                J=_number(sec, "J", "config.params", params.J),
                Delta=_number(sec, "Delta", "config.params", params.Delta),
            )
        except ValueError as exc:
            raise ConfigError(f"config.params: {exc}") from None

    time = defaults.time
    if "time" in doc:
        sec = doc["time"]
        if not isinstance(sec, dict):
            raise ConfigError("config.time must be an object")
        _require_keys(sec, {"horizon", "dt", "record_dt"}, "config.time")
        time = TimeGrid(
            horizon=_number(sec, "horizon", "config.time", time.horizon),
            dt=_number(sec, "dt", "config.time", time.dt),
            record_dt=_number(sec, "record_dt", "config.time", time.record_dt),
        )

    sweep = defaults.sweep
    if "sweep" in doc:
        sec = doc["sweep"]
        if sec is None:
            sweep = None
        else:
            if not isinstance(sec, dict):
                raise ConfigError("config.sweep must be an object or null")
            _require_keys(sec, {"min", "max", "steps"}, "config.sweep")
            lo = _number(sec, "min", "config.sweep", None)
            hi = _number(sec, "max", "config.sweep", None)
            steps = sec.get("steps")
            if lo is None or hi is None or not isinstance(steps, int):
                raise ConfigError("config.sweep needs numeric min/max and integer steps")
            sweep = SweepGrid(lo=lo, hi=hi, steps=steps)

    shots = doc.get("shots", defaults.shots)
    if not isinstance(shots, int) or isinstance(shots, bool):
        raise ConfigError(f"config.shots must be an integer, got {shots!r}")
    seed = doc.get("seed", defaults.seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"config.seed must be an integer, got {seed!r}")
    mode = doc.get("mode", defaults.mode)
    if not isinstance(mode, str):
        raise ConfigError(f"config.mode must be a string, got {mode!r}")
    output_dir = doc.get("output_dir", defaults.output_dir)
    if not isinstance(output_dir, str):
        raise ConfigError(f"config.output_dir must be a string, got {output_dir!r}")

    try:
        return RunConfig(params=params, time=time, sweep=sweep, shots=shots,
                         seed=seed, mode=mode, output_dir=output_dir)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str, defaults: RunConfig) -> RunConfig:
    """Read and validate a JSON config file, reporting parse position on error."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return config_from_dict(doc, defaults)
