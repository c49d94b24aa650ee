"""
Experiment Schemas - simulation and experiment configuration

Config files are .env-style `key = value` files read with python-dotenv.
Values are strings; this module turns family, multiplier and list strings
into the typed fields of ExperimentConfig and anchors every validation
error to the offending line.
"""
import hashlib
import json
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from app.models.kernel import ConstantMultiplier, KernelSpec, Multiplier
from app.models.scaling import ScalingFunction, Tabulated, WsCertificate
from app.utils.errors import ConfigError


class SmallJumpMode(str, Enum):
    """Treatment of jumps below the cutoff"""
    DROP = "drop"          # discard
    GAUSSIAN = "gaussian"  # variance-matched Brownian part


class ProcessKind(str, Enum):
    Z = "z"   # independent coordinate processes, kernel J^φ
    X = "x"   # thinned process, kernel λ·J^φ


class ExperimentKind(str, Enum):
    PHI_CHECK = "phi-check"
    ENVELOPE = "envelope"
    EXIT = "exit"
    MOMENTS = "moments"
    DIAG = "diag"
    LADDER = "ladder"
    NASH = "nash"
    BOXES = "boxes"
    SIMULATE = "simulate"


# Experiments that simulate paths
MONTE_CARLO_KINDS = {
    ExperimentKind.ENVELOPE,
    ExperimentKind.EXIT,
    ExperimentKind.MOMENTS,
    ExperimentKind.DIAG,
    ExperimentKind.SIMULATE,
}

REQUIRED_KEYS: Dict[ExperimentKind, Tuple[str, ...]] = {
    ExperimentKind.PHI_CHECK: ("phi",),
    ExperimentKind.ENVELOPE: ("phi", "eps"),
    ExperimentKind.EXIT: ("phi", "eps"),
    ExperimentKind.MOMENTS: ("phi", "eps"),
    ExperimentKind.DIAG: ("phi", "eps"),
    ExperimentKind.LADDER: ("alpha_lower", "alpha_upper"),
    ExperimentKind.NASH: ("phi",),
    ExperimentKind.BOXES: ("point",),
    ExperimentKind.SIMULATE: ("phi", "eps"),
}

# Keys that never change numeric output
DIGEST_EXCLUDE = {"out", "csv_out", "paths_out", "events", "n_workers"}


# ============ Simulation ============

class SimConfig(BaseModel):
    """Everything a path simulation depends on"""
    model_config = ConfigDict(frozen=True)

    spec: KernelSpec
    process: ProcessKind = ProcessKind.Z
    eps: float = Field(..., gt=0, description="Jump cutoff length")
    horizon: float = Field(..., gt=0, description="Time horizon T")
    small_jump_mode: SmallJumpMode = SmallJumpMode.GAUSSIAN
    n_paths: int = Field(..., ge=1)
    base_seed: int = Field(0, ge=0)
    start: Optional[Tuple[float, ...]] = Field(None, description="Start point; origin when omitted")

    @model_validator(mode="after")
    def _check_start(self) -> "SimConfig":
        if self.start is not None and len(self.start) != self.spec.dim:
            raise ValueError(f"start has {len(self.start)} coordinates, dim is {self.spec.dim}")
        return self

    @property
    def phi(self):
        return self.spec.phi

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def start_point(self) -> Tuple[float, ...]:
        return self.start if self.start is not None else (0.0,) * self.spec.dim

    def with_horizon(self, horizon: float) -> "SimConfig":
        return self.model_copy(update={"horizon": horizon})


class GridSpec(BaseModel):
    """Axis-aligned histogram grid"""
    model_config = ConfigDict(frozen=True)

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    bins: Tuple[int, ...]

    @classmethod
    def around(cls, center, kappa: float, half_width_factor: float = 16.0,
               bin_factor: float = 0.25) -> "GridSpec":
        """Box of half-width half_width_factor·κ with bins of width bin_factor·κ"""
        per_axis = max(1, int(round(2 * half_width_factor / bin_factor)))
        half = half_width_factor * kappa
        return cls(
            lower=tuple(float(c) - half for c in center),
            upper=tuple(float(c) + half for c in center),
            bins=(per_axis,) * len(center),
        )

    @property
    def dim(self) -> int:
        return len(self.bins)

    def scaled(self, kappa: float) -> "GridSpec":
        """Grid in the κ-scaled picture: coordinates divided by κ"""
        return GridSpec(
            lower=tuple(v / kappa for v in self.lower),
            upper=tuple(v / kappa for v in self.upper),
            bins=self.bins,
        )


# ============ Value grammar ============

_PARAMS = re.compile(r"^\s*([A-Za-z_]+)\s*=\s*([^,]+?)\s*$")
_TERM = re.compile(r"\(([^()]*)\)")


def _params(text: str) -> Dict[str, float]:
    """'a=1,b=2' -> {'a': 1.0, 'b': 2.0}"""
    out: Dict[str, float] = {}
    if not text.strip():
        return out
    for item in text.split(","):
        match = _PARAMS.match(item)
        if not match:
            raise ValueError(f"expected name=value, got '{item.strip()}'")
        name, raw = match.groups()
        try:
            out[name] = float(raw)
        except ValueError:
            raise ValueError(f"{name}: '{raw}' is not a number") from None
    return out


def parse_family(text: str, base_dir: Optional[Path] = None) -> Union[Dict[str, Any], Tabulated]:
    """
    Parse a scaling-family string:

        power:alpha=1.5,scale=1
        sum:(c=1,a=0.5)+(c=1,a=1.5)
        table:path/to/table.csv
    """
    kind, sep, body = text.strip().partition(":")
    if not sep:
        raise ValueError(f"family '{text}' must look like <kind>:<parameters>")
    kind = kind.strip().lower()
    if kind == "power":
        params = _params(body)
        unknown = set(params) - {"alpha", "scale"}
        if unknown:
            raise ValueError(f"unknown power parameters: {sorted(unknown)}")
        return {"kind": "power", **params}
    if kind == "sum":
        terms = []
        for raw in _TERM.findall(body):
            params = _params(raw)
            if set(params) != {"c", "a"}:
                raise ValueError(f"sum terms need exactly c and a, got '({raw})'")
            terms.append((params["c"], params["a"]))
        leftover = _TERM.sub("", body).replace("+", "").strip()
        if leftover or not terms:
            raise ValueError(f"malformed sum '{body}'")
        return {"kind": "sum", "terms": terms}
    if kind == "table":
        path = Path(body.strip())
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ValueError(f"table file not found: {path}")
        return Tabulated.from_csv(path)
    raise ValueError(f"unknown family '{kind}' (power, sum, table)")


def parse_multiplier(text: str) -> Dict[str, Any]:
    """constant:c=1 | checkerboard:period=1,low=0.5,high=2 | wave:frequency=1,amplitude=0.5"""
    kind, _, body = text.strip().partition(":")
    kind = kind.strip().lower()
    allowed = {
        "constant": {"c"},
        "checkerboard": {"period", "low", "high"},
        "wave": {"frequency", "amplitude"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown multiplier '{kind}' ({', '.join(allowed)})")
    params = _params(body)
    unknown = set(params) - allowed[kind]
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
    return {"kind": kind, **params}


def _split_list(value):
    if isinstance(value, str):
        items = [item.strip() for item in value.split(",")]
        return tuple(item for item in items if item)
    return value


# ============ Experiment ============

class ExperimentConfig(BaseModel):
    """One experiment; unknown keys are rejected"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: ExperimentKind

    # scaling function and certificate overrides
    phi: Optional[ScalingFunction] = None
    alpha_lower: Optional[float] = Field(None, gt=0, lt=2)
    alpha_upper: Optional[float] = Field(None, gt=0, lt=2)
    c_lower: Optional[float] = Field(None, gt=0, le=1)
    c_upper: Optional[float] = Field(None, ge=1)

    # kernel
    dim: int = Field(1, ge=1)
    process: ProcessKind = ProcessKind.Z
    multiplier: Multiplier = Field(default_factory=ConstantMultiplier)
    lambda_bound: float = Field(1.0, ge=1)
    truncation: Optional[float] = Field(None, gt=0)

    # simulation
    eps: Optional[float] = Field(None, gt=0)
    t: float = Field(1.0, gt=0)
    horizon: Optional[float] = Field(None, gt=0)
    small_jump_mode: SmallJumpMode = SmallJumpMode.GAUSSIAN
    n_paths: int = Field(10000, ge=1)
    seed: int = Field(0, ge=0)
    start: Optional[Tuple[float, ...]] = None

    # verification
    t_list: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    r_list: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    radii: Tuple[float, ...] = (0.5, 1.0, 2.0)
    min_count: int = Field(300, ge=1)
    max_spread: Optional[float] = Field(None, gt=1)
    control_factor: float = Field(0.25, gt=0, lt=1)
    control_alpha: Optional[float] = Field(None, gt=0, lt=2)
    control_margin: float = Field(0.1, ge=0)
    small_jump_tolerance: float = Field(0.01, gt=0)
    half_width_factor: float = Field(16.0, gt=0)
    bin_factor: float = Field(0.25, gt=0)

    # energy
    scales: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    nodes: Optional[int] = Field(None, ge=7)

    # boxes
    point: Optional[Tuple[float, ...]] = None
    center: Optional[Tuple[float, ...]] = None
    kappa: float = Field(1.0, gt=0)

    # outputs
    out: Optional[str] = None
    csv_out: Optional[str] = None
    paths_out: Optional[str] = None
    events: bool = False
    n_workers: Optional[int] = Field(None, ge=1)

    @field_validator("start", "t_list", "r_list", "radii", "scales", "point", "center", mode="before")
    @classmethod
    def _split(cls, value):
        return _split_list(value)

    @field_validator("phi", mode="before")
    @classmethod
    def _parse_phi(cls, value):
        if isinstance(value, str):
            return parse_family(value)
        return value

    @field_validator("multiplier", mode="before")
    @classmethod
    def _parse_multiplier(cls, value):
        if isinstance(value, str):
            return parse_multiplier(value)
        return value

    @model_validator(mode="after")
    def _check_kind(self) -> "ExperimentConfig":
        for key in REQUIRED_KEYS[self.experiment]:
            if getattr(self, key) is None:
                raise ValueError(f"{key}: required for experiment '{self.experiment.value}'")
        if self.start is not None and len(self.start) != self.dim:
            raise ValueError(f"start has {len(self.start)} coordinates, dim is {self.dim}")
        if self.r_list and min(self.r_list) < 1:
            raise ValueError("r_list entries must be >= 1")
        if self.experiment == ExperimentKind.DIAG and len(self.t_list) < 2:
            raise ValueError("t_list needs at least two times")
        return self

    # ---- derived objects ---------------------------------------------

    def certified_phi(self):
        """phi with the certificate overrides applied"""
        if self.phi is None:
            return None
        overrides = {
            key: getattr(self, key)
            for key in ("alpha_lower", "alpha_upper", "c_lower", "c_upper")
            if getattr(self, key) is not None
        }
        if not overrides:
            return self.phi
        base = self.phi.ws.model_dump()
        base.update(overrides)
        return self.phi.model_copy(update={"certificate": WsCertificate(**base)})

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(
            phi=self.certified_phi(),
            lambda_bound=self.lambda_bound,
            multiplier=self.multiplier,
            dim=self.dim,
            truncation=self.truncation,
        )

    def sim_config(self, horizon: Optional[float] = None, n_paths: Optional[int] = None) -> SimConfig:
        return SimConfig(
            spec=self.kernel_spec(),
            process=self.process,
            eps=self.eps,
            horizon=horizon or self.horizon or self.t,
            small_jump_mode=self.small_jump_mode,
            n_paths=n_paths or self.n_paths,
            base_seed=self.seed,
            start=self.start,
        )

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude=DIGEST_EXCLUDE)

    def digest(self) -> str:
        """64-bit hash of the canonical serialisation"""
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.blake2b(payload.encode("utf-8"), digest_size=8).hexdigest()


# ============ Loader ============

_KEY_LINE = re.compile(r"^\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_.\-]*)\s*=")


def _key_lines(path: Path) -> Tuple[Dict[str, int], int]:
    lines: Dict[str, int] = {}
    text = path.read_text(encoding="utf-8").splitlines()
    for number, line in enumerate(text, start=1):
        match = _KEY_LINE.match(line)
        if match:
            lines[match.group(1).lower()] = number
    return lines, len(text)


def load_experiment_config(path: Union[str, Path],
                           overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read and validate a config file.

    Raises ConfigError with a `<file>:<line>: <key>: <reason>` message on any
    unknown key, invalid value or missing required key.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    lines, n_lines = _key_lines(path)
    raw = {key.lower(): value for key, value in dotenv_values(path).items()}

    def fail(key: str, reason: str) -> ConfigError:
        if overrides and key in overrides:
            return ConfigError(f"--{key.replace('_', '-')}: {reason}")
        line = lines.get(key, n_lines + 1)
        return ConfigError(f"{path}:{line}: {key}: {reason}")

    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if value is None or not value.strip():
            raise fail(key, "missing value")
        values[key] = value.strip()

    if "phi" in values:
        try:
            values["phi"] = parse_family(values["phi"], base_dir=path.parent)
        except ValueError as e:
            raise fail("phi", str(e)) from None
        except OSError as e:
            raise fail("phi", f"cannot read table: {e}") from None
    if overrides:
        values.update(overrides)

    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(part) for part in first.get("loc", ())]
        message = first.get("msg", "invalid value")
        if first.get("type") == "extra_forbidden":
            raise fail(loc[0], "unknown key") from None
        if loc:
            raise fail(loc[0], message) from None
        # model-level messages start with the key they concern
        key, _, reason = message.removeprefix("Value error, ").partition(": ")
        if key in ExperimentConfig.model_fields:
            raise fail(key, reason) from None
        raise ConfigError(f"{path}:{n_lines + 1}: {message}") from None
