"""Run configuration shared by the command-line tools.

Values are layered: built-in defaults (the experiment's parameters), then a
``key=value`` config file, then command-line flags.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .opa import NUMERIC_G_MAX

__all__ = ["RunConfig", "ConfigError", "read_config_file", "parse_phases", "parse_labels"]


class ConfigError(ValueError):
    pass


def parse_phases(text: str) -> list[float]:
    """``"13"`` means 13 evenly spaced phases over [0, 2pi]; otherwise a comma list of radians."""
    text = text.strip()
    if text.isdigit():
        count = int(text)
        if count < 2:
            return [0.0] * count
        return [2.0 * math.pi * k / (count - 1) for k in range(count)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse phases {text!r}") from exc


def parse_labels(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _opt_int(v):
    return None if v in (None, "", "none", "auto") else int(v)


def _opt_float(v):
    return None if v in (None, "", "none") else float(v)


@dataclass
class RunConfig:
    gain: float = 4.45
    vin: float = 0.85
    p_inject: float = 0.4
    eta: float = 0.13
    trials: int = 2500
    seed: int = 0
    truncation: int | None = None
    backend: str = "auto"
    out: str | None = None
    format: str = "csv"
    phases: str = "13"
    delta_phi: float = 0.0
    condition_total: int | None = None
    mode: str = "conditional"
    alice_bases: str | None = None
    bob_bases: str = "pm,rl"
    threshold: float | None = None
    bs_transmission: float = 0.5
    gain_noise_sigma: float = 0.0
    background: float = 0.0

    _converters = {
        "gain": float,
        "vin": float,
        "p_inject": float,
        "eta": float,
        "trials": int,
        "seed": int,
        "truncation": _opt_int,
        "backend": str,
        "out": str,
        "format": str,
        "phases": str,
        "delta_phi": float,
        "condition_total": _opt_int,
        "mode": str,
        "alice_bases": str,
        "bob_bases": str,
        "threshold": _opt_float,
        "bs_transmission": float,
        "gain_noise_sigma": float,
        "background": float,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_layers(cls, *layers: dict) -> RunConfig:
        merged: dict = {}
        for layer in layers:
            for key, value in layer.items():
                if value is None:
                    continue
                if key not in cls._converters:
                    raise ConfigError(f"unknown configuration key {key!r}")
                try:
                    merged[key] = cls._converters[key](value) if isinstance(value, str) else value
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {value!r}") from exc
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not (math.isfinite(self.gain) and self.gain >= 0):
            raise ConfigError(f"gain must be finite and >= 0, got {self.gain}")
        for name in ("vin", "p_inject", "eta", "bs_transmission", "background"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.gain_noise_sigma < 0:
            raise ConfigError("gain_noise_sigma must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.truncation is not None and self.truncation < 1:
            raise ConfigError("truncation must be >= 1")
        if self.backend not in ("analytic", "numeric", "auto"):
            raise ConfigError(f"backend must be analytic, numeric or auto, got {self.backend!r}")
        if self.backend == "numeric" and self.gain > NUMERIC_G_MAX:
            raise ConfigError(f"the numeric backend is limited to g <= {NUMERIC_G_MAX}, got g={self.gain}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.mode not in ("conditional", "xor", "severed"):
            raise ConfigError(f"mode must be conditional, xor or severed, got {self.mode!r}")
        if self.threshold is not None and not self.threshold >= 0:
            raise ConfigError("threshold must be >= 0")

    @property
    def resolved_backend(self) -> str:
        if self.backend != "auto":
            return self.backend
        return "numeric" if self.gain <= NUMERIC_G_MAX else "analytic"

    def snapshot(self) -> dict:
        return asdict(self)


def read_config_file(path: str | Path) -> dict:
    """Parse UTF-8 ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        if key not in RunConfig._converters:
            raise ConfigError(f"{path}:{lineno}: unknown configuration key {key!r}")
        out[key] = value.strip()
    return out
