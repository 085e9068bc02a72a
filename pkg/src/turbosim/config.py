"""Flat dotted-key run configuration.

Files are INI-like. Keys may be written fully dotted at top level
(``channel.alpha = 4``) or inside a section (``[channel]`` then
``alpha = 4``); both forms resolve to the same dotted key. ``#`` and ``;``
start comments. Values that accept several entries are comma separated.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config", "DEFAULTS", "KNOWN_KEYS"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


DEFAULTS: dict[str, str] = {
    "scheme.kind": "VBLAST",
    "scheme.M": "2",
    "scheme.N": "2",
    "scheme.modulation": "PSK",
    "scheme.q": "2",
    "scheme.power": "per-antenna",
    "channel.alpha": "4",
    "channel.beta": "2",
    "sim.snr_start": "0",
    "sim.snr_stop": "40",
    "sim.snr_step": "0.5",
    "sim.max_trials": "10000000",
    "sim.min_bit_errors": "100",
    "sim.seed": "1",
    "sim.workers": "1",
    "sim.block_trials": "32768",
    "pep.sent": "1,1",
    "pep.target": "0,0",
    "pep.trials": "1000000",
    "pep.form": "pairwise",
    "cdf.r": "0.02,0.05,0.1",
    "cdf.trials": "1000000",
    "cdf.method": "factorized",
    "cr.trials": "1000000",
    "capacity.trials": "100000",
    "capacity.unit_irradiance": "false",
    "capacity.M": "",
    "capacity.N": "",
    "compare.fec": "1e-3",
    "compare.ladder": "2,4,16,64",
    "compare.siso_ladder": "4,16,64,256,1024,4096",
    "compare.max_trials": "20000",
    "compare.block_trials": "4096",
    "asymptote.N": "1,2,3",
    "output.svg": "false",
}

# keys with no default: sim.snr_grid overrides the start/stop/step triple
KNOWN_KEYS = frozenset(DEFAULTS) | {"sim.snr_grid"}



def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse config text into a ``{dotted.key: raw value}`` mapping."""
    out: dict[str, str] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if section and not key.startswith(section + "."):
            key = f"{section}.{key}"
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        out[key] = value
    return out


def load_config(path: str | Path) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {p}: {exc}") from exc
    return parse_config_text(text, str(p))


def _as(key: str, raw: str, conv: Callable[[str], Any], what: str):
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"expected {what}, got {raw!r}") from exc


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _split(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


@dataclass
class RunConfig:
    """Resolved view over a dotted-key mapping (defaults < file < flags)."""

    values: dict[str, str]

    @classmethod
    def build(cls, file_values: Mapping[str, str] | None = None,
              overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        merged = dict(DEFAULTS)
        merged.update(file_values or {})
        for k, v in (overrides or {}).items():
            if v is not None:
                merged[k] = str(v)
        return cls(merged)

    def raw(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(key, "missing") from None

    def text(self, key: str) -> str:
        return self.raw(key).strip()

    def integer(self, key: str, minimum: int | None = None) -> int:
        v = _as(key, self.raw(key), lambda s: int(float(s)) if float(s).is_integer() else int(s), "an integer")
        if minimum is not None and v < minimum:
            raise ConfigError(key, f"must be >= {minimum}, got {v}")
        return v

    def number(self, key: str) -> float:
        v = _as(key, self.raw(key), float, "a number")
        if not math.isfinite(v):
            raise ConfigError(key, f"must be finite, got {v}")
        return v

    def flag(self, key: str) -> bool:
        return _as(key, self.raw(key), _bool, "a boolean")

    def int_list(self, key: str, minimum: int | None = None) -> list[int]:
        parts = _split(self.raw(key))
        if not parts:
            raise ConfigError(key, "must not be empty")
        vals = [_as(key, p, int, "a list of integers") for p in parts]
        if minimum is not None and any(v < minimum for v in vals):
            raise ConfigError(key, f"entries must be >= {minimum}")
        return vals

    def float_list(self, key: str) -> list[float]:
        parts = _split(self.raw(key))
        if not parts:
            raise ConfigError(key, "must not be empty")
        return [_as(key, p, float, "a list of numbers") for p in parts]

    def str_list(self, key: str) -> list[str]:
        parts = _split(self.raw(key))
        if not parts:
            raise ConfigError(key, "must not be empty")
        return parts

    def snr_grid(self) -> list[float]:
        """``sim.snr_grid`` if given, else ``snr_start:snr_stop:snr_step`` inclusive."""
        if "sim.snr_grid" in self.values:
            grid = _split(self.values["sim.snr_grid"])
            if not grid:
                raise ConfigError("sim.snr_grid", "must not be empty")
            vals = [_as("sim.snr_grid", g, float, "a list of numbers") for g in grid]
        else:
            start, stop, step = (self.number(f"sim.snr_{k}") for k in ("start", "stop", "step"))
            if step <= 0:
                raise ConfigError("sim.snr_step", f"must be > 0, got {step}")
            if stop < start:
                raise ConfigError("sim.snr_stop", f"must be >= sim.snr_start ({start}), got {stop}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [float(np.round(start + k * step, 10)) for k in range(n)]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sim.snr_grid", "must be strictly increasing")
        return vals

    def config_hash(self) -> int:
        """64-bit hash of the resolved key/value set (order independent).

        ``sim.workers`` is left out: it never changes results.
        """
        keys = sorted(k for k in self.values if k != "sim.workers")
        blob = "\n".join(f"{k}={self.values[k].strip()}" for k in keys).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")
