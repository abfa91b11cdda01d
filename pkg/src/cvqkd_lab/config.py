"""Run configuration: flat ``key = value`` files with dotted keys, plus flag overrides."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCENARIOS = ("fig1a", "fig1b", "fig3", "fig4", "sweep", "mc-attack", "mc-stabilize", "mc-validate")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


KEY_TYPES = {
    "scenario": str,
    "v": float,
    "beta": float,
    "eta": float,
    "n_el": float,
    "eps": float,
    "loss_db_range.start": float,
    "loss_db_range.stop": float,
    "loss_db_range.step": float,
    "gain": float,
    "chi_d_max": float,
    "mc.n": _parse_int,
    "mc.seed": _parse_int,
    "mc.lo_profile": str,
    "mc.stabilizer": _parse_bool,
    "mc.monitor_noise": float,
    "mc.export": str,
    "out": str,
    "format": str,
}

COMMON_DEFAULTS = {
    "v": 40.0,
    "beta": 1.0,
    "eta": 0.606,
    "n_el": 0.041,
    "eps": 0.2,
    "gain": 1.0,
    "chi_d_max": 100.0,
    "mc.n": 1_000_000,
    "mc.seed": 0,
    "mc.lo_profile": "constant",
    "mc.stabilizer": False,
    "mc.monitor_noise": 0.0,
    "mc.export": None,
    "out": None,
    "format": "csv",
}

# 10 log10(2) dB puts the Monte Carlo channel at T = 1/2.
_HALF = 10.0 * math.log10(2.0)

SCENARIO_DEFAULTS = {
    "fig1a": {"loss": (0.0, 10.0, 0.25)},
    "fig1b": {"loss": (0.0, 10.0, 0.25)},
    "fig3": {"loss": (0.0, 20.0, 0.5)},
    "fig4": {"loss": (0.0, 25.0, 0.5), "eps": 0.25},
    "sweep": {"loss": (0.0, 30.0, 0.5)},
    "mc-validate": {"loss": (_HALF, _HALF, 1.0)},
    "mc-attack": {"loss": (_HALF, _HALF, 1.0), "gain": 2.0},
    "mc-stabilize": {"loss": (_HALF, _HALF, 1.0), "gain": 2.0, "mc.stabilizer": True},
}


def parse_loss_range(text: str) -> tuple[float, float, float]:
    """``"start:stop:step"`` or a single loss value."""
    parts = text.split(":")
    if len(parts) == 1:
        x = float(parts[0])
        return x, x, 1.0
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:step, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    return start, stop, step


def read_config_file(path) -> dict:
    """Parse a config file into ``{key: (value, line_number)}``."""
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, text = (s.strip() for s in line.split("=", 1))
        if key not in KEY_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            value = KEY_TYPES[key](text)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        entries[key] = (value, lineno)
    return entries


@dataclass
class RunConfig:
    scenario: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def out(self):
        return self.values["out"]

    @property
    def format(self) -> str:
        return self.values["format"]

    def loss_grid(self) -> np.ndarray:
        start = self.values["loss_db_range.start"]
        stop = self.values["loss_db_range.stop"]
        step = self.values["loss_db_range.step"]
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(count)


def build_config(scenario: str, file_entries: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, config-file entries and flag overrides (in that order) and validate."""
    file_entries = file_entries or {}
    overrides = overrides or {}
    if "scenario" in file_entries and file_entries["scenario"][0] != scenario:
        value, line = file_entries["scenario"]
        raise ConfigError(f"line {line}: scenario {value!r} does not match subcommand {scenario!r}")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")

    values = dict(COMMON_DEFAULTS)
    sdef = dict(SCENARIO_DEFAULTS[scenario])
    start, stop, step = sdef.pop("loss")
    values.update({"loss_db_range.start": start, "loss_db_range.stop": stop, "loss_db_range.step": step})
    values.update(sdef)
    lines = {}
    for key, (value, line) in file_entries.items():
        values[key] = value
        lines[key] = line
    for key, value in overrides.items():
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
            lines.pop(key, None)
    values["scenario"] = scenario

    def where(key):
        return f"line {lines[key]}: " if key in lines else ""

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{where(key)}{key!r} {msg}")

    need(values["format"] in FORMATS, "format", f"must be one of {FORMATS}")
    need(values["loss_db_range.step"] > 0, "loss_db_range.step", "must be > 0")
    need(values["loss_db_range.start"] >= 0, "loss_db_range.start", "must be >= 0")
    need(values["loss_db_range.stop"] >= values["loss_db_range.start"], "loss_db_range.stop", "must be >= start (empty range)")
    need(values["v"] >= 1, "v", "must be >= 1")
    need(0 < values["beta"] <= 1, "beta", "must lie in (0, 1]")
    need(0 < values["eta"] <= 1, "eta", "must lie in (0, 1]")
    need(values["n_el"] >= 0, "n_el", "must be >= 0")
    need(values["eps"] >= 0, "eps", "must be >= 0")
    need(values["gain"] > 0, "gain", "must be > 0")
    need(values["chi_d_max"] > 0, "chi_d_max", "must be > 0")
    need(values["mc.n"] >= 1, "mc.n", "must be >= 1")
    need(values["mc.monitor_noise"] >= 0, "mc.monitor_noise", "must be >= 0")
    return RunConfig(scenario=scenario, values=values)
