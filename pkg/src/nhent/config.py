"""Run configuration: strict TOML parsing into validated pydantic models.

Every section rejects unknown keys, and errors are reported with the
offending key path and, where it can be found, its line in the file.
"""

from __future__ import annotations

import re
import sys
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COMMANDS = ("simulate", "sweep", "collapse", "spectral", "oracle-check")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key:
            where.append(f"key '{key}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


def _even_size(L: int) -> int:
    if L < 4 or L % 2:
        raise ValueError(f"system size must be an even integer >= 4, got {L}")
    return L


class ScheduleSection(_Section):
    dt: float = Field(2.0, gt=0)
    n_steps: int = Field(1000, ge=1)
    record_last: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _record_within_steps(self):
        if self.record_last > self.n_steps:
            raise ValueError("record_last must not exceed n_steps")
        return self


class ObservablesSection(_Section):
    entropy_profile: bool = False
    density: bool = True
    correlation: bool = True
    mutual_information: bool = True


class ModelSection(_Section):
    J: float = 1.0
    gamma: float = -0.5
    W: float = Field(0.0, ge=0)
    L: int = 64
    boundary: Literal["open", "periodic"] = "open"
    realizations: int = Field(200, ge=1)

    _check_L = field_validator("L")(_even_size)


class SweepSection(_Section):
    J: float = 1.0
    gamma_list: List[float] = Field(default_factory=lambda: [-0.5])
    W_list: List[float] = Field(default_factory=lambda: [round(2.0 + 0.25 * k, 2) for k in range(13)])
    L_list: List[int] = Field(default_factory=lambda: [32, 64, 96, 128])
    realizations: int = Field(200, ge=1)
    boundary: Literal["open", "periodic"] = "open"
    observables: ObservablesSection = Field(default_factory=ObservablesSection)

    @field_validator("L_list")
    @classmethod
    def _check_sizes(cls, v):
        for L in v:
            _even_size(L)
        return v

    @field_validator("W_list")
    @classmethod
    def _check_W(cls, v):
        if any(W < 0 for W in v):
            raise ValueError("disorder strengths must be >= 0")
        return v


class CollapseSection(_Section):
    input: str = "builtin:synthetic"
    gamma: Optional[float] = None
    init: List[float] = Field(default_factory=lambda: [3.35, 1.9, 0.5], min_length=3, max_length=3)
    restarts: int = Field(8, ge=1)
    margin: float = Field(0.35, ge=0)
    uncertainty: bool = True
    subsets: Optional[List[List[int]]] = None


class SpectralSection(_Section):
    J: float = 1.0
    gamma: float = -0.5
    L: int = 128
    W_list: List[float] = Field(default_factory=lambda: [0.5 + 0.25 * k for k in range(23)])
    realizations: int = Field(50, ge=1)
    boundary: Literal["open", "periodic"] = "open"
    asymptotic: bool = True
    bins: int = Field(101, ge=3)
    n_sites: int = Field(20000, ge=1000)

    _check_L = field_validator("L")(_even_size)


class OracleSection(_Section):
    instances: int = Field(20, ge=1)
    sizes: List[int] = Field(default_factory=lambda: [6, 8, 10])
    gammas: List[float] = Field(default_factory=lambda: [0.0, -0.5])
    W_values: List[float] = Field(default_factory=lambda: [0.0, 2.0, 5.0])
    times: List[float] = Field(default_factory=lambda: [2.0, 10.0, 20.0])
    dt: float = Field(2.0, gt=0)
    tolerance: float = Field(1e-8, gt=0)

    @field_validator("sizes")
    @classmethod
    def _check_sizes(cls, v):
        for L in v:
            if L % 2 or L < 2 or L > 12:
                raise ValueError(f"oracle sizes must be even and <= 12, got {L}")
        return v


class RunConfig(_Section):
    command: Literal["simulate", "sweep", "collapse", "spectral", "oracle-check"]
    output_dir: str = "out"
    base_seed: int = Field(0, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)
    model: ModelSection = Field(default_factory=ModelSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    collapse: CollapseSection = Field(default_factory=CollapseSection)
    spectral: SpectralSection = Field(default_factory=SpectralSection)
    oracle: OracleSection = Field(default_factory=OracleSection)


_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def locate_key(text: str, path: tuple) -> int | None:
    """1-based line of ``path`` (section..., key) in TOML ``text``, if found."""
    names = [p for p in path if isinstance(p, str)]
    if not names:
        return None
    section, key = ".".join(names[:-1]), names[-1]
    current = ""
    fallback = None
    for lineno, line in enumerate(text.splitlines(), 1):
        h = _HEADER.match(line)
        if h:
            current = h.group(1)
            if current == ".".join(names):
                fallback = lineno
            continue
        k = _KEY.match(line)
        if k and k.group(1) == key and current == section:
            return lineno
    return fallback


def _from_mapping(raw: dict, text: str = "", overrides: dict | None = None) -> RunConfig:
    data = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(err["loc"])
        key = ".".join(str(p) for p in loc)
        msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
        raise ConfigError(msg, key=key, line=locate_key(text, loc) if text else None) from None


def parse_config(path: str | Path | None, **overrides) -> RunConfig:
    """Read and validate a TOML run configuration; ``overrides`` win over file values."""
    if path is None:
        return _from_mapping({}, "", overrides)
    text = Path(path).read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(str(exc), line=int(m.group(1)) if m else None) from None
    if "command" in raw and overrides.get("command") and raw["command"] != overrides["command"]:
        raise ConfigError(
            f"file requests '{raw['command']}' but '{overrides['command']}' was invoked",
            key="command", line=locate_key(text, ("command",)),
        )
    return _from_mapping(raw, text, overrides)


def resolved(config: RunConfig) -> dict:
    return config.model_dump(mode="json")
