"""Experiment configuration: JSON file -> validated dataclasses."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .field import BUILTINS, ScalarField, builtin, polynomial_field


@dataclass
class FieldConfig:
    builtin: Optional[str] = None
    params: dict = field(default_factory=dict)
    polynomial: Optional[dict] = None

    def __post_init__(self):
        if (self.builtin is None) == (self.polynomial is None):
            raise ConfigError("field needs exactly one of 'builtin' or 'polynomial'")
        if self.builtin is not None and self.builtin not in BUILTINS:
            raise ConfigError(f"unknown builtin {self.builtin!r}; choose from {sorted(BUILTINS)}")
        if self.polynomial is not None:
            extra = set(self.polynomial) - {"dim", "terms"}
            if extra or "dim" not in self.polynomial or "terms" not in self.polynomial:
                raise ConfigError("polynomial block takes exactly 'dim' and 'terms'")

    def build(self) -> ScalarField:
        if self.builtin is not None:
            return builtin(self.builtin, self.params)
        dim = self.polynomial["dim"]
        if not isinstance(dim, int) or not 1 <= dim <= 64:
            raise ConfigError("polynomial dim must be an integer in [1, 64]")
        terms = []
        for t in self.polynomial["terms"]:
            if not (isinstance(t, list) and len(t) == 2 and isinstance(t[1], list) and len(t[1]) == dim):
                raise ConfigError(f"polynomial term {t!r} must be [coeff, [e_1..e_{dim}]]")
            if any(not isinstance(e, int) or e < 0 for e in t[1]):
                raise ConfigError(f"exponents in {t!r} must be nonnegative integers")
            terms.append((t[0], t[1]))
        return polynomial_field(dim, terms)


def _positive(name, v):
    if not (isinstance(v, (int, float)) and v > 0):
        raise ConfigError(f"{name} must be a positive number, got {v!r}")


def _mode(name, mode, gamma):
    if mode not in ("continuous", "discrete"):
        raise ConfigError(f"{name}.mode must be 'continuous' or 'discrete'")
    if mode == "discrete":
        if gamma is None:
            raise ConfigError(f"{name}: discrete mode needs gamma")
        _positive(f"{name}.gamma", gamma)


@dataclass
class TraceConfig:
    index: int = 1
    step: float = 1e-3
    arclength: float = 0.2

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 1:
            raise ConfigError("trace.index must be a positive integer")
        _positive("trace.step", self.step)
        _positive("trace.arclength", self.arclength)


@dataclass
class TalwegConfig:
    levels: Optional[list] = None
    level_min: float = 1e-6
    level_max: float = 1e-3
    count: int = 8
    mode: str = "min"

    def __post_init__(self):
        if self.mode not in ("min", "max"):
            raise ConfigError("talweg.mode must be 'min' or 'max'")
        if self.levels is not None:
            if not self.levels or any(not isinstance(v, (int, float)) for v in self.levels):
                raise ConfigError("talweg.levels must be a nonempty list of numbers")
        else:
            _positive("talweg.level_min", self.level_min)
            _positive("talweg.level_max", self.level_max)
            if self.level_max <= self.level_min or self.count < 2:
                raise ConfigError("talweg needs level_min < level_max and count >= 2")


@dataclass
class AlignConfig:
    mode: str = "continuous"
    gamma: Optional[float] = None
    starts: Optional[list] = None
    n: int = 0
    horizon: float = 14.0
    samples: int = 281
    target_index: int = 1

    def __post_init__(self):
        _mode("align", self.mode, self.gamma)
        _positive("align.horizon", self.horizon)
        if self.starts is None and self.n < 1:
            raise ConfigError("align needs 'starts' or a positive 'n' for random starts")
        if self.samples < 2:
            raise ConfigError("align.samples must be >= 2")


@dataclass
class ValleyConfig:
    width: float = 0.1
    mode: str = "continuous"
    gamma: Optional[float] = None
    starts: Optional[list] = None
    horizon: float = 20.0
    samples: int = 401

    def __post_init__(self):
        _mode("valley", self.mode, self.gamma)
        if not self.width >= 0:
            raise ConfigError("valley.width must be nonnegative")
        if not self.starts:
            raise ConfigError("valley needs a nonempty 'starts' list")
        _positive("valley.horizon", self.horizon)


@dataclass
class ConcentrateConfig:
    width: float = 0.1
    set_center: Optional[list] = None
    set_radius: float = 0.2
    times: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0, 8.0])
    n: int = 1000
    mode: str = "continuous"
    gamma: Optional[float] = None

    def __post_init__(self):
        _mode("concentrate", self.mode, self.gamma)
        _positive("concentrate.set_radius", self.set_radius)
        if self.n < 100:
            raise ConfigError("concentrate.n must be >= 100")
        if not self.times or any(t < 0 for t in self.times):
            raise ConfigError("concentrate.times must be a nonempty list of nonnegative numbers")


@dataclass
class VerifyConfig:
    max_order: int = 10
    probe_points: int = 8


@dataclass
class OutputConfig:
    dir: str = "out"
    format: str = "both"

    def __post_init__(self):
        if self.format not in ("csv", "json", "both"):
            raise ConfigError("output.format must be csv, json or both")


@dataclass
class ExperimentConfig:
    field: FieldConfig
    critical_point: Optional[list] = None
    radius: Optional[float] = None
    seed: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)
    trace: Optional[TraceConfig] = None
    talweg: Optional[TalwegConfig] = None
    align: Optional[AlignConfig] = None
    valley: Optional[ValleyConfig] = None
    concentrate: Optional[ConcentrateConfig] = None
    verify: Optional[VerifyConfig] = None

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Short SHA-256 of the canonical JSON form of the resolved config."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_BLOCKS = {
    "field": FieldConfig,
    "output": OutputConfig,
    "trace": TraceConfig,
    "talweg": TalwegConfig,
    "align": AlignConfig,
    "valley": ValleyConfig,
    "concentrate": ConcentrateConfig,
    "verify": VerifyConfig,
}


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _where(text, key):
    line = _line_of(text, key)
    return "" if line is None else f"line {line}: "


def _build(cls, data, path, text):
    if not isinstance(data, dict):
        raise ConfigError(f"{_where(text, path.split('.')[-1])}'{path}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{_where(text, key)}unknown key '{key}' in '{path}'")
    try:
        return cls(**data)
    except ConfigError as exc:
        raise ConfigError(f"{_where(text, path.split('.')[-1])}{exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{_where(text, path.split('.')[-1])}bad '{path}' block: {exc}") from None


def parse_config(data, text=None) -> ExperimentConfig:
    """Validate a decoded JSON object. ``text`` (the raw file) enables line numbers."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in data:
        if key not in top:
            raise ConfigError(f"{_where(text, key)}unknown key '{key}' at top level")
    if "field" not in data:
        raise ConfigError("config needs a 'field' block")
    kwargs = {}
    for key, value in data.items():
        if key in _BLOCKS:
            kwargs[key] = _build(_BLOCKS[key], value, key, text)
        else:
            kwargs[key] = value
    seed = kwargs.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{_where(text, 'seed')}seed must be a nonnegative integer")
    r = kwargs.get("radius")
    if r is not None and not (isinstance(r, (int, float)) and r > 0):
        raise ConfigError(f"{_where(text, 'radius')}radius must be positive")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_config(data, text)
