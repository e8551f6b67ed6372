"""
Job configuration.

Values come from an optional INI file (`[job]` and `[constants]` sections),
then command-line flags, then the environment for the worker count only.
"""
import configparser
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from sympy import isprime

from .errors import UsageError
from .report import OutputFormat
from .triangle import DEFAULT_TILE_BUDGET

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

DEFAULT_CONSTANTS: Dict[str, float] = {
    "C_count": 16.0,
    "C_hecke": 16.0,
    "K": 2.0,
    "C_omega": 8.0,
    "C_radius": 4.0,
    "C_lens": 4.0,
    "C_disksep": 1.5,
    "C_mult": 16.0,
}

DEFAULT_P = 7
DEFAULT_DELTA = 0.1
DEFAULT_TOL = 1e-9
DEFAULT_SEED = 42
DEFAULT_SAMPLES = 8
DEFAULT_HECKE_CAP = 6

COMMANDS = (
    "verify geometry", "verify repulsion", "verify volume", "verify multiplicity",
    "report genus", "list cusps", "list cm", "list bicusps", "list hecke",
)
VOLUME_CHECKS = ("all", "ht", "htd", "htad", "collar", "profile", "current", "lelong")


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once; XP_LAB_LOG_LEVEL picks the level."""
    name = (level or os.getenv("XP_LAB_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format=LOG_FORMAT)


def env_jobs() -> int:
    raw = os.getenv("XP_LAB_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"XP_LAB_JOBS must be an integer, got {raw!r}")


def _check_prime(p: int) -> int:
    if p <= 3 or not isprime(p):
        raise ValueError(f"p must be a prime > 3, got {p}")
    return p


def _merged_constants(values: Optional[Mapping[str, float]]) -> Dict[str, float]:
    merged = dict(DEFAULT_CONSTANTS)
    for name, value in (values or {}).items():
        value = float(value)
        if not value > 0:
            raise ValueError(f"constant {name} must be positive, got {value}")
        merged[name] = value
    return merged


class RepulsionJob(BaseModel):
    """One prime's worth of repulsion work: delta, the O(.) constants and budgets."""

    model_config = ConfigDict(frozen=True)

    p: int
    delta: float = DEFAULT_DELTA
    constants: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_CONSTANTS))
    samples: int = DEFAULT_SAMPLES
    hecke_cap: int = DEFAULT_HECKE_CAP
    max_tiles: int = DEFAULT_TILE_BUDGET
    seed: int = DEFAULT_SEED

    @field_validator("p")
    @classmethod
    def _prime(cls, v: int) -> int:
        return _check_prime(v)

    @field_validator("delta")
    @classmethod
    def _delta_range(cls, v: float) -> float:
        # delta = 0 is allowed here for edge runs; JobConfig keeps it strictly positive
        if not 0.0 <= v < 0.25:
            raise ValueError(f"delta must lie in [0, 0.25), got {v}")
        return v

    @field_validator("constants", mode="before")
    @classmethod
    def _constants(cls, v: Any) -> Dict[str, float]:
        return _merged_constants(v)

    @field_validator("samples", "hecke_cap", "max_tiles")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"budgets must be positive, got {v}")
        return v

    def constant(self, name: str) -> float:
        try:
            return self.constants[name]
        except KeyError:
            raise UsageError(f"unknown constant {name!r}; known: {sorted(self.constants)}")

    @property
    def m_bound(self) -> float:
        """C_hecke p^{K delta}: the largest Hecke degree the repulsion bounds allow."""
        return self.constant("C_hecke") * self.p ** (self.constant("K") * self.delta)

    def with_delta(self, delta: float) -> "RepulsionJob":
        return self.model_copy(update={"delta": delta})


class JobConfig(BaseModel):
    command: str = "verify geometry"
    p_list: List[int] = Field(default_factory=lambda: [DEFAULT_P])
    delta: float = DEFAULT_DELTA
    tol: float = DEFAULT_TOL
    height_bound: Optional[int] = None
    constants: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_CONSTANTS))
    jobs: int = 1
    seed: int = DEFAULT_SEED
    samples: int = DEFAULT_SAMPLES
    out: OutputFormat = OutputFormat.JSON
    volume_check: str = "all"
    r: Optional[float] = None
    R: Optional[float] = None

    @field_validator("command")
    @classmethod
    def _command(cls, v: str) -> str:
        if v not in COMMANDS:
            raise ValueError(f"unknown command {v!r}")
        return v

    @field_validator("p_list")
    @classmethod
    def _primes(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("at least one p is required")
        return [_check_prime(p) for p in v]

    @field_validator("delta")
    @classmethod
    def _delta_range(cls, v: float) -> float:
        if not 0.0 < v < 0.25:
            raise ValueError(f"delta must lie in (0, 0.25), got {v}")
        return v

    @field_validator("tol")
    @classmethod
    def _tol_range(cls, v: float) -> float:
        if not 1e-12 <= v <= 1e-3:
            raise ValueError(f"tol must lie in [1e-12, 1e-3], got {v}")
        return v

    @field_validator("height_bound")
    @classmethod
    def _height(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"height bound must be >= 1, got {v}")
        return v

    @field_validator("constants", mode="before")
    @classmethod
    def _constants(cls, v: Any) -> Dict[str, float]:
        return _merged_constants(v)

    @field_validator("jobs", "samples")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("volume_check")
    @classmethod
    def _volume_check(cls, v: str) -> str:
        if v not in VOLUME_CHECKS:
            raise ValueError(f"volume check must be one of {VOLUME_CHECKS}, got {v!r}")
        return v

    def echo(self) -> Dict[str, Any]:
        """Config as echoed into reports; the worker count is left out."""
        return self.model_dump(mode="json", exclude={"jobs"})

    def repulsion_job(self, p: int) -> RepulsionJob:
        return RepulsionJob(p=p, delta=self.delta, constants=self.constants,
                            samples=self.samples, seed=self.seed)


def parse_constants(items: Sequence[str]) -> Dict[str, float]:
    """NAME=VALUE pairs from repeated --const flags."""
    out: Dict[str, float] = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise UsageError(f"--const expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--const {name}: {value!r} is not a number")
    return out


def parse_p_list(raw: str) -> List[int]:
    try:
        return [int(x) for x in raw.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"p list must be integers, got {raw!r}")


_INI_CASTS = {
    "delta": float, "tol": float, "height_bound": int, "seed": int,
    "samples": int, "jobs": int, "out": str, "r": float, "R": float, "volume_check": str,
}


def read_ini(path: str) -> Dict[str, Any]:
    """Defaults from an INI file: [job] keys and [constants] NAME = VALUE."""
    parser = configparser.ConfigParser()
    # keep key case: R and r are different options
    parser.optionxform = str
    if not parser.read(path):
        raise UsageError(f"config file {path} could not be read")
    values: Dict[str, Any] = {}
    if parser.has_section("job"):
        for key, raw in parser.items("job"):
            if key == "p":
                values["p_list"] = parse_p_list(raw)
            elif key in _INI_CASTS:
                try:
                    values[key] = _INI_CASTS[key](raw)
                except ValueError:
                    raise UsageError(f"{path}: [job] {key} = {raw!r} has the wrong type")
            else:
                raise UsageError(f"{path}: unknown [job] key {key!r}")
    if parser.has_section("constants"):
        values["constants"] = {}
        for key, raw in parser.items("constants"):
            try:
                values["constants"][key] = float(raw)
            except ValueError:
                raise UsageError(f"{path}: constant {key} = {raw!r} is not a number")
    logger.info(f"[CLI] Loaded defaults from {path}")
    return values


def build_config(command: str, flags: Mapping[str, Any], config_path: Optional[str] = None) -> JobConfig:
    """Layer INI defaults, then flags that were given, then XP_LAB_JOBS for the worker count."""
    values: Dict[str, Any] = read_ini(config_path) if config_path else {}
    constants = dict(values.pop("constants", {}))
    for key, value in flags.items():
        if value is None:
            continue
        if key == "constants":
            constants.update(value)
        else:
            values[key] = value
    if "jobs" not in values:
        values["jobs"] = env_jobs()
    values["constants"] = constants
    values["command"] = command
    try:
        return JobConfig(**values)
    except ValidationError as exc:
        raise UsageError(str(exc))
