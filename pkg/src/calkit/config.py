"""Experiment configuration files.

A configuration is a flat INI file. Keys live in the [calkit] section,
whose header may be omitted; arrays are comma-separated lists.

    m = 17
    rho_list = 4, 8, 16, 32
    potential = bump
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from calkit.errors import CalkitError

SECTION = "calkit"
OUTPUT_ENV = "CALKIT_OUT"
DEFAULT_OUTPUT = Path("calkit-out")


class ConfigError(CalkitError):
    """Error when a configuration file cannot be used."""


class UnknownKeyError(ConfigError):
    """Error when a configuration names a key nobody reads."""

    def __init__(self, key: str) -> None:
        """Initialize with the unknown key."""
        self.key = key
        super().__init__(f"unknown configuration key {key!r}")


class InvalidValueError(ConfigError):
    """Error when a value does not parse as its key's type."""

    def __init__(self, key: str, value: str, expected: str) -> None:
        """Initialize with the key, the raw value and the expected type."""
        self.key = key
        super().__init__(f"{key} = {value!r}: expected {expected}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of every command, with desk-scale defaults.

    Acceptance thresholds decide the exit status: a run whose results miss
    them still writes its outputs and exits with status 2.
    """

    # grid
    R: float = 2.0
    L: float = 1.0
    m: int = 17
    M: int = 32
    m_list: tuple[float, ...] = (9.0, 17.0)

    # coefficients and data
    potential: str = "bump"
    amplitude: float = 1.0
    potential_b: str = "zero"
    amplitude_b: float = 1.0
    conductivity: str = "cosine_bump"
    dirichlet: str = "x1"

    # CGO and sampling
    rho: float = 8.0
    rho_list: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0)
    xi: tuple[float, ...] = (0.0, 0.0, 0.0)
    xi_max: int = 2
    mode: str = "faithful"
    kind: str = "type1"
    tol: float = 1e-10
    max_iter: int = 25

    # partial data
    eta: tuple[float, ...] = ()
    epsilon: float = 0.25

    # inequalities
    seed: int = 1
    samples: int = 20
    constant: float = 0.0
    calibrate: bool = False
    rho1: float = 0.0
    baseline_rho: float = 0.0

    # acceptance thresholds
    ratio_range: tuple[float, ...] = (3.2, 4.8)
    min_ratio: float = 1.5
    slope_range: tuple[float, ...] = (-1.3, -0.7)
    h2_slope_range: tuple[float, ...] = (0.6, 1.4)
    max_slope: float = -0.4
    max_error: float = 0.35
    max_defect: float = 1e-3

    def to_record(self) -> dict[str, Any]:
        """Describe the parameters for JSON manifests."""
        return dataclasses.asdict(self)


def _parse_list(key: str, raw: str) -> tuple[float, ...]:
    items = [item.strip() for item in raw.split(",") if item.strip()]
    try:
        return tuple(float(item) for item in items)
    except ValueError as exc:
        raise InvalidValueError(key, raw, "a comma list of numbers") from exc


def _parse_value(key: str, raw: str, default: object) -> object:
    if isinstance(default, tuple):
        return _parse_list(key, raw)
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        states = configparser.ConfigParser.BOOLEAN_STATES
        if lowered not in states:
            raise InvalidValueError(key, raw, "a boolean")
        return states[lowered]
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise InvalidValueError(key, raw, "an integer") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise InvalidValueError(key, raw, "a number") from exc
    return raw.strip()


def _has_header(text: str) -> bool:
    """Check whether the first meaningful line is a section header."""
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith(("#", ";")):
            return stripped.startswith("[")
    return False


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text into an ExperimentConfig."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    if not _has_header(text):
        text = f"[{SECTION}]\n{text}"
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        msg = f"malformed configuration {source}: {exc}"
        raise ConfigError(msg) from exc
    extra = [name for name in parser.sections() if name != SECTION]
    if extra:
        msg = f"unknown section [{extra[0]}] in {source}"
        raise ConfigError(msg)
    fields = dataclasses.fields(ExperimentConfig)
    defaults = {f.name: f.default for f in fields}
    values: dict[str, Any] = {}
    if parser.has_section(SECTION):
        for key, raw in parser.items(SECTION):
            if key not in defaults:
                raise UnknownKeyError(key)
            values[key] = _parse_value(key, raw, defaults[key])
    return ExperimentConfig(**values)


def load_config(path: Path) -> tuple[ExperimentConfig, str]:
    """Read a configuration file; also return its SHA-256."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        msg = f"cannot read configuration {path}: {exc.strerror}"
        raise ConfigError(msg) from exc
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        msg = f"configuration {path} is not UTF-8 text"
        raise ConfigError(msg) from exc
    digest = hashlib.sha256(data).hexdigest()
    return parse_config(text, str(path)), digest


def resolve_output_dir(option: Path | None) -> Path:
    """--out, then $CALKIT_OUT, then ./calkit-out."""
    if option is not None:
        return option
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return DEFAULT_OUTPUT
