"""
Pydantic schemas for run configuration files.

Run configurations are TOML documents with the sections grid, time, scheme,
dual, forward, scenario and io. Validation failures are reported as
ConfigError naming the offending key and its line in the source text.
"""

from __future__ import annotations

import json
import re
import tomllib
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, ValidationInfo, field_validator, model_validator

from config import Config
from ..core.packed_algebra import diagonal_a
from ..enums import Backend, OptimizerMethod, ScenarioName
from ..utils.exceptions import ConfigError

STEP_TOLERANCE = 1e-9


class _Section(BaseModel):
    model_config = {"extra": "forbid"}


class GridSection(_Section):
    n: int = Field(16, ge=4, description="points per axis")


class TimeSection(_Section):
    T: float = Field(0.5, gt=0.0, description="final time")
    nt: int = Field(8, ge=2, description="time intervals of the dual lattice")
    dt: Optional[float] = Field(None, gt=0.0, description="forward step; when omitted, samples every T / nt with CFL substeps")

    @field_validator("dt")
    def validate_dt_divides_T(cls, v: Optional[float], info: ValidationInfo) -> Optional[float]:
        T = info.data.get("T")
        if v is None or T is None:
            return v
        steps = T / v
        if abs(steps - round(steps)) > STEP_TOLERANCE * max(1.0, steps):
            raise ValueError(f"T = {T} is not a whole number of steps of {v} (T / dt = {steps:.6g})")
        return v

    @property
    def forward_dt(self) -> float:
        return self.dt if self.dt is not None else self.T / self.nt

    @property
    def forward_steps(self) -> int:
        return int(round(self.T / self.forward_dt))


class SchemeSection(_Section):
    backend: Backend = Backend.SPECTRAL


class DualSection(_Section):
    a_v: float = Field(Config.DEFAULT_A, gt=0.0)
    a_alpha: float = Field(Config.DEFAULT_A, gt=0.0)
    a_p: float = Field(Config.DEFAULT_A, gt=0.0)
    tol: float = Field(Config.DEFAULT_TOL, gt=0.0)
    max_iter: int = Field(Config.DEFAULT_MAX_ITER, ge=0)
    method: OptimizerMethod = OptimizerMethod.LBFGS
    history: int = Field(10, ge=1)
    base: ScenarioName = ScenarioName.CONSTANT
    base_path: Optional[str] = None
    perturbation: float = Field(0.0, ge=0.0, description="amplitude of the smooth perturbation of the base")
    initial_amplitude: float = Field(0.0, ge=0.0, description="amplitude of the random starting dual state")

    @model_validator(mode="after")
    def validate_base_path(self) -> "DualSection":
        if self.base is ScenarioName.FROM_FILE and not self.base_path:
            raise ValueError("base = 'from_file' requires base_path")
        return self

    def a(self) -> np.ndarray:
        return diagonal_a(self.a_v, self.a_alpha, self.a_p)


class ForwardSection(_Section):
    nu: float = Field(0.0, ge=0.0)
    eta: float = Field(0.0, ge=0.0)
    dealias: bool = True
    sample_every: int = Field(1, ge=1)
    cfl_limit: float = Field(0.5, gt=0.0)


class ScenarioSection(_Section):
    name: ScenarioName = ScenarioName.CONSTANT
    seed: int = Field(0, ge=0)
    amplitude: float = Field(1.0, ge=0.0)
    row: int = Field(1, ge=1, le=3, description="alpha row carrying the embedded field")
    path: Optional[str] = None

    @model_validator(mode="after")
    def validate_path(self) -> "ScenarioSection":
        if self.name is ScenarioName.FROM_FILE and not self.path:
            raise ValueError("name = 'from_file' requires path")
        return self


class IoSection(_Section):
    output_dir: str = Field(default_factory=lambda: Config.OUTPUT_DIR, min_length=1)


class RunConfig(_Section):
    """A complete run configuration."""

    grid: GridSection = Field(default_factory=GridSection)
    time: TimeSection = Field(default_factory=TimeSection)
    scheme: SchemeSection = Field(default_factory=SchemeSection)
    dual: DualSection = Field(default_factory=DualSection)
    forward: ForwardSection = Field(default_factory=ForwardSection)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    io: IoSection = Field(default_factory=IoSection)

    def to_toml(self) -> str:
        """Serialize to TOML text accepted by `parse_config_text`."""
        lines: list[str] = []
        for section, values in self.model_dump(mode="json").items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                if value is None:
                    continue
                lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        return "\n".join(lines)


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return json.dumps(str(value))


_DECODE_LINE = re.compile(r"line (\d+)")


def _line_of(text: str, loc: tuple[Any, ...]) -> Optional[int]:
    """1-based line of the key at `loc` (section, key), falling back to the section header."""
    if not loc:
        return None
    section = str(loc[0])
    key = str(loc[1]) if len(loc) > 1 else None
    current = None
    section_line = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current == section:
                section_line = number
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*=", line):
            return number
    return section_line


def parse_config_text(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _DECODE_LINE.search(str(e))
        raise ConfigError(f"malformed TOML: {e}", line=int(match.group(1)) if match else None) from e

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first.get("loc", ()))
        key = ".".join(str(part) for part in loc) or "config"
        raise ConfigError(f"{key}: {first.get('msg', 'invalid value')}", line=_line_of(text, loc)) from e


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e.strerror}") from e
    return parse_config_text(text)
