"""Run configuration: a JSON document validated into :class:`RunConfig`.

Schema (all keys optional except one of ``preset``/``expr``)::

    {
      "preset": "porous3",              # or "expr": "3*u0^2*u2", with "j" and "gammas"
      "j": 2, "gammas": [1, 0, 0],
      "eps": 0.0, "direction": "forward",   # "backward" runs the t -> -t equation, needs eps = 0
      "initial": {"type": "random_band", "seed": 7, "s": 2.0, "amplitude": 0.2, "mean": 1.0},
                 # or {"type": "modes", "modes": [[k, re, im], ...]} or {"type": "file", "path": "f.json"}
      "K_grid": 64, "t_end": 0.05, "dt": 1e-4, "scheme": "ETDRK4", "stride": 1,
      "s": 8, "s_values": [4, 8], "tail_split": null, "blowup": 1e6,
      "K_corr": 16, "C_mh": 4.0, "C_s": 4.0, "energy": true,
      "etas": null, "bona_smith_s": null, "s_prime": null,
      "seed": 0, "snapshots": false, "output_dir": "run"
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .field import Field, field_from_modes, random_band_field
from .multipliers import DispersionSymbol
from .nonlinearity import parse_nonlinearity
from .presets import preset
from .solver import SCHEMES, Equation

__all__ = ["RunConfig", "load_config", "parse_override"]


@dataclass
class RunConfig:
    preset: str | None = None
    expr: str | None = None
    j: int = 2
    gammas: list | None = None
    eps: float = 0.0
    direction: str = "forward"
    initial: dict = field(default_factory=lambda: {"type": "modes", "modes": [[1, 0.5, 0.0]]})
    K_grid: int = 64
    t_end: float = 0.05
    dt: float = 1e-4
    scheme: str = "ETDRK4"
    stride: int = 1
    s: int = 8
    s_values: list = field(default_factory=lambda: [4, 8])
    tail_split: int | None = None
    blowup: float = 1e6
    K_corr: int = 16
    C_mh: float = 4.0
    C_s: float = 4.0
    energy: bool = True
    etas: list | None = None
    bona_smith_s: float | None = None
    s_prime: float | None = None
    seed: int = 0
    snapshots: bool = False
    output_dir: str = "run"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if (self.preset is None) == (self.expr is None):
            raise ConfigError("give exactly one of 'preset' and 'expr'")
        if not (isinstance(self.eps, (int, float)) and math.isfinite(self.eps) and 0 <= self.eps <= 1):
            raise ConfigError(f"eps must lie in [0, 1], got {self.eps!r}")
        if self.direction not in ("forward", "backward"):
            raise ConfigError("direction must be 'forward' or 'backward'")
        if self.direction == "backward" and self.eps > 0:
            raise ConfigError("backward runs need eps = 0 (the regularized flow is ill-posed backward)")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        for name in ("t_end", "dt", "blowup"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.K_grid < 4 or self.K_corr < 1 or self.K_corr > self.K_grid:
            raise ConfigError("need K_grid >= 4 and 1 <= K_corr <= K_grid")
        if self.stride < 1 or self.s < 1:
            raise ConfigError("stride and s must be >= 1")
        if self.etas is not None:
            e = [float(x) for x in self.etas]
            if len(e) < 2 or any(b >= a for a, b in zip(e, e[1:])) or not all(0 < x <= 1 for x in e):
                raise ConfigError("etas must be >= 2 values in (0, 1], strictly decreasing")
        if self.initial.get("type") not in ("modes", "random_band", "file"):
            raise ConfigError("initial.type must be 'modes', 'random_band' or 'file'")

    def equation(self) -> Equation:
        if self.preset is not None:
            base = preset(self.preset).equation
        else:
            gammas = self.gammas if self.gammas is not None else [1] + [0] * self.j
            try:
                base = Equation(DispersionSymbol(self.j, tuple(gammas)), parse_nonlinearity(self.expr))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return base.with_eps(float(self.eps))

    def initial_field(self, base_dir: Path | None = None) -> Field:
        spec = self.initial
        kind = spec["type"]
        if kind == "modes":
            return field_from_modes([(k, complex(re, im)) for k, re, im in spec["modes"]], self.K_grid)
        if kind == "random_band":
            return random_band_field(
                int(spec.get("seed", self.seed)), float(spec.get("s", self.s)),
                float(spec.get("amplitude", 0.01)), self.K_grid, float(spec.get("mean", 0.0)),
            )
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            f = Field.from_json(json.loads(path.read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read initial field {path}: {exc}") from None
        return f.with_K_grid(self.K_grid)


def parse_override(text: str) -> tuple[str, object]:
    """'key=value' with the value read as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data.update(overrides or {})
    return RunConfig.from_dict(data)
