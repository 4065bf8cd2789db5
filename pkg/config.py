"""Configuration management for the dipolar stability toolkit."""
import os
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Tuple

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError

VERSION = "0.3.0"

# Project paths
PROJECT_DIR = Path(__file__).parent
DEFAULTS_FILE = PROJECT_DIR / "defaults.yaml"

# Load environment variables from .env file
load_dotenv(PROJECT_DIR / ".env")

OUTPUT_DIR = Path(os.getenv("DIPOLAR_STAB_OUTPUT_DIR", str(PROJECT_DIR / "results")))

# scipy.fft worker count; -1 uses every core
FFT_WORKERS = int(os.getenv("DIPOLAR_STAB_THREADS", "-1"))

# Logging configuration
LOG_LEVEL = os.getenv("DIPOLAR_STAB_LOG_LEVEL", "INFO")

COMMANDS = ("gn-constant", "stability", "ground-state", "collapse-scan", "symbol-dump", "townes")

EPSILON_MESSAGE = (
    "'epsilon' is not configurable: the transverse width is fixed to (2*pi)^(-1/2) by the model"
)


def load_defaults() -> Dict:
    """Load numerical defaults from YAML file."""
    with open(DEFAULTS_FILE, 'r') as f:
        return yaml.safe_load(f)


def parse_fraction(token: str) -> Fraction:
    """Parse a decimal or `p/q` token into an exact fraction.

    Args:
        token: Text such as "1/3", "0.5" or "1"

    Returns:
        The exact rational value

    Raises:
        ConfigError: If the token is not a number
    """
    try:
        return Fraction(token.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"Invalid fraction '{token}'", {"token": token}) from e


class RunConfig(BaseModel):
    """Validated settings for a single CLI run."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    command: Literal["gn-constant", "stability", "ground-state", "collapse-scan", "symbol-dump", "townes"]

    # physical model
    beta: float = 0.0
    lam: float = Field(0.0, alias="lambda")
    n3: Optional[float] = None
    n3sq: Optional[str] = None
    trap: Literal["harmonic", "quartic"] = "harmonic"
    omega1: float = 1.0
    omega2: float = 1.0
    quartic_c: float = 1.0

    # effective parameters (gn-constant only)
    a: Optional[float] = None
    b: Optional[float] = None

    # grid
    n1: int = 128
    n2: int = 128
    L1: float = 24.0
    L2: float = 24.0

    # solvers
    tol_rel: float = 1e-9
    tol_grad: float = 1e-6
    max_iter: int = 20000
    refine_tol: float = 1e-3
    scenes: Tuple[Tuple[int, float], ...] = ((128, 24.0), (256, 32.0))
    max_nodes: int = 512
    seed: int = 0
    tau0: float = 0.1
    tau_max: float = 1.0
    tol_energy: float = 1e-10
    tol_residual: float = 1e-6
    collapse_factor: float = 4.0
    energy_floor: float = -1000.0

    # stability
    tol: float = 1e-2
    borderline_tol: float = 5e-4
    analyze_borderline: bool = False
    exact_borderline: bool = False

    # collapse scan
    L_max: float = 0.4
    L_min: float = 0.04
    L_count: int = 6
    min_box: float = 8.0
    scan_max_nodes: int = 2048
    fit_terms: Literal["leading", "extended"] = "leading"
    sweep: Optional[Path] = None

    # symbol dump
    kind: Literal["high_freq", "fab", "quasi2d"] = "high_freq"

    # output
    output_dir: Path = OUTPUT_DIR
    timestamps: bool = False

    @field_validator("n1", "n2")
    @classmethod
    def _even_counts(cls, v: int) -> int:
        if v < 16 or v % 2:
            raise ValueError("node counts must be even and >= 16")
        return v

    @field_validator("L1", "L2", "omega1", "omega2", "quartic_c", "min_box")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("tol_rel", "tol_grad", "refine_tol", "tau0", "tau_max", "tol_energy",
                     "tol_residual", "tol", "borderline_tol", "collapse_factor")
    @classmethod
    def _positive_tolerance(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("tolerances must be positive")
        return v

    @field_validator("n3")
    @classmethod
    def _unit_component(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and abs(v) > 1:
            raise ValueError("|n3| must be <= 1")
        return v

    @field_validator("scenes", mode="before")
    @classmethod
    def _parse_scenes(cls, v):
        # config files spell scenes as "128:24, 256:32"
        if isinstance(v, str):
            try:
                return tuple(
                    (int(n), float(L)) for n, L in (item.split(":") for item in v.split(",") if item.strip())
                )
            except ValueError as e:
                raise ValueError("scenes must look like '128:24, 256:32'") from e
        return v

    @field_validator("scenes")
    @classmethod
    def _valid_scenes(cls, v: Tuple[Tuple[int, float], ...]) -> Tuple[Tuple[int, float], ...]:
        if not v:
            raise ValueError("at least one scene is required")
        for n, L in v:
            if n < 16 or n % 2 or not L > 0:
                raise ValueError("scene node counts must be even and >= 16, boxes positive")
        return v

    @field_validator("n3sq", mode="before")
    @classmethod
    def _n3sq_as_text(cls, v):
        return None if v is None else str(v)

    @field_validator("n3sq")
    @classmethod
    def _unit_square(cls, v: Optional[str]) -> Optional[str]:
        if v is None:
            return v
        value = parse_fraction(str(v))
        if not 0 <= value <= 1:
            raise ValueError("n3sq must lie in [0, 1]")
        return str(v).strip()

    @model_validator(mode="after")
    def _consistency(self) -> "RunConfig":
        if self.n3 is not None and self.n3sq is not None:
            raise ValueError("give either n3 or n3sq, not both")
        if not 0 < self.L_min < self.L_max:
            raise ValueError("collapse scan needs 0 < L_min < L_max")
        needed = 6 if self.fit_terms == "extended" else 4
        if self.L_count < needed:
            raise ValueError(f"collapse scan needs at least {needed} lengths for the {self.fit_terms} fit")
        if self.command == "gn-constant" and (self.a is None) != (self.b is None):
            raise ValueError("gn-constant needs both a and b, or neither")
        return self

    def n3sq_fraction(self) -> Optional[Fraction]:
        """Exact square of the polarization component when given as a token."""
        if self.n3sq is not None:
            return parse_fraction(self.n3sq)
        return None

    def n3sq_value(self) -> float:
        if self.n3sq is not None:
            return float(parse_fraction(self.n3sq))
        if self.n3 is not None:
            return self.n3 ** 2
        return 1.0

    def echo(self) -> Dict:
        """Config as plain builtins, keyed by the user-facing names."""
        data = self.model_dump(by_alias=True, mode="json")
        data["scenes"] = [list(s) for s in self.scenes]
        return data


def read_config_file(path: Path) -> Dict[str, str]:
    """Read a `key = value` configuration file.

    Args:
        path: Config file path

    Returns:
        Mapping of keys to raw string values

    Raises:
        ConfigError: On malformed lines, duplicate keys or missing file
    """
    if not Path(path).exists():
        raise ConfigError(f"Config file not found: {path}", {"path": str(path)})

    entries: Dict[str, str] = {}
    with open(path, 'r', encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'", {"line": lineno})
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value", {"line": lineno})
            if key in entries:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'", {"key": key})
            entries[key] = value
    return entries


def parse_flag_pairs(args: List[str]) -> Dict[str, str]:
    """Turn `--key value` tokens into a mapping.

    Args:
        args: Leftover CLI tokens

    Returns:
        Mapping with dashes in flag names replaced by underscores
    """
    overrides: Dict[str, str] = {}
    i = 0
    while i < len(args):
        token = args[i]
        if not token.startswith("--"):
            raise ConfigError(f"Unexpected argument '{token}'", {"token": token})
        if "=" in token:
            key, value = token[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"Flag '{token}' needs a value", {"flag": token})
            key, value = token[2:], args[i + 1]
            i += 2
        overrides[key.replace("-", "_")] = value
    return overrides


def _command_defaults(command: str) -> Dict:
    defaults = load_defaults()
    merged: Dict = dict(defaults["grid"])
    merged.update(defaults["gn_solver"])
    merged["scenes"] = [tuple(s) for s in merged["scenes"]]
    merged.update({k: v for k, v in defaults["stability"].items()})
    scan = defaults["collapse_scan"]
    merged.update({k: v for k, v in scan.items() if k != "max_nodes"})
    merged["scan_max_nodes"] = scan["max_nodes"]
    ground = defaults["ground_state"]
    own = ("n1", "n2", "L1", "L2", "max_iter")
    merged.update({k: v for k, v in ground.items() if k not in own})
    if command == "ground-state":
        merged.update({k: ground[k] for k in own})
    if command == "symbol-dump":
        merged.update(defaults["symbol_dump"])
    return merged


def parse_config(command: str, path: Optional[Path] = None,
                 overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Build a validated RunConfig from defaults, a config file and CLI flags.

    Args:
        command: Subcommand name
        path: Optional `key = value` config file
        overrides: Flag values that take precedence over the file

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: With the offending key names on any validation failure
    """
    if command not in COMMANDS:
        raise ConfigError(f"Unknown command '{command}'", {"command": command})

    values: Dict = _command_defaults(command)
    if path is not None:
        values.update(read_config_file(Path(path)))
    values.update(dict(overrides or {}))

    if "epsilon" in values:
        raise ConfigError(EPSILON_MESSAGE, {"key": "epsilon"})
    if "command" in values and values["command"] != command:
        raise ConfigError("Config file names a different command", {"key": "command"})
    values["command"] = command

    try:
        return RunConfig.model_validate(values)
    except ValidationError as e:
        keys = sorted({".".join(str(p) for p in err["loc"]) or "config" for err in e.errors()})
        messages = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid configuration ({messages})", {"keys": keys}) from e
