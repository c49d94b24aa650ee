"""
Kernel Models - axis-aligned jump kernels and their envelopes

J(x, y) = λ(x, y) · J^φ(x, y), where J^φ charges only pairs differing in
exactly one coordinate and λ is a symmetric multiplier in [Λ⁻¹, Λ].
"""
import math
from typing import Annotated, ClassVar, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.scaling import ScalingFunction


# ============ Multipliers ============

class ConstantMultiplier(BaseModel):
    """λ ≡ c"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    c: float = Field(1.0, gt=0, description="Constant value")

    state_independent: ClassVar[bool] = True

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x)[:-1], self.c)

    def bounds(self) -> Tuple[float, float]:
        return self.c, self.c

    def label(self) -> str:
        return f"constant:c={self.c:g}"


class CheckerboardMultiplier(BaseModel):
    """
    λ(x, y) = low or high by the parity of the period-cell holding the
    midpoint (x + y)/2; symmetric because the midpoint is.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["checkerboard"] = "checkerboard"
    period: float = Field(1.0, gt=0, description="Cell side length")
    low: float = Field(..., gt=0, description="Value on even cells")
    high: float = Field(..., gt=0, description="Value on odd cells")

    state_independent: ClassVar[bool] = False

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        mid = 0.5 * (np.asarray(x, dtype=float) + np.asarray(y, dtype=float))
        parity = np.sum(np.floor(mid / self.period), axis=-1) % 2
        return np.where(parity == 0, self.low, self.high)

    def bounds(self) -> Tuple[float, float]:
        return min(self.low, self.high), max(self.low, self.high)

    def label(self) -> str:
        return f"checkerboard:period={self.period:g},low={self.low:g},high={self.high:g}"


class WaveMultiplier(BaseModel):
    """λ(x, y) = 1 + amplitude · cos(frequency · Σ_i (x^i − y^i))"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["wave"] = "wave"
    frequency: float = Field(1.0, gt=0)
    amplitude: float = Field(..., ge=0, lt=1)

    state_independent: ClassVar[bool] = False

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = np.sum(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
        return 1.0 + self.amplitude * np.cos(self.frequency * diff)

    def bounds(self) -> Tuple[float, float]:
        return 1.0 - self.amplitude, 1.0 + self.amplitude

    def label(self) -> str:
        return f"wave:frequency={self.frequency:g},amplitude={self.amplitude:g}"


Multiplier = Annotated[
    Union[ConstantMultiplier, CheckerboardMultiplier, WaveMultiplier],
    Field(discriminator="kind"),
]


class KernelSpec(BaseModel):
    """Λ-comparable axis-aligned jump kernel"""
    model_config = ConfigDict(frozen=True)

    phi: ScalingFunction
    lambda_bound: float = Field(1.0, ge=1, description="Comparability constant Λ")
    multiplier: Multiplier = Field(default_factory=ConstantMultiplier)
    dim: int = Field(1, ge=1, description="Dimension d")
    truncation: Optional[float] = Field(None, gt=0, description="Jumps longer than this are removed")

    @model_validator(mode="after")
    def _check_comparability(self) -> "KernelSpec":
        lo, hi = self.multiplier.bounds()
        lam = self.lambda_bound
        if lo < (1.0 / lam) * (1 - 1e-12) or hi > lam * (1 + 1e-12):
            raise ValueError(
                f"multiplier range [{lo:g}, {hi:g}] is not inside [1/{lam:g}, {lam:g}]"
            )
        return self


# ============ Kernel values ============

class AxisValue(BaseModel):
    """Pair differing in exactly one coordinate; axis is 1-based"""
    kind: Literal["axis"] = "axis"
    axis: int
    value: float


class ZeroValue(BaseModel):
    """Pair differing in two or more coordinates (or truncated away)"""
    kind: Literal["zero"] = "zero"


class DiagonalValue(BaseModel):
    """x = y; the kernel has no value there"""
    kind: Literal["diagonal"] = "diagonal"


KernelValue = Union[AxisValue, ZeroValue, DiagonalValue]


class EnvelopeValue(BaseModel):
    """Heat-kernel envelope in factored form"""
    value: float = Field(..., description="prefactor · Π factors")
    per_axis_factors: List[float] = Field(..., description="One factor in [0, 1] per axis")
    prefactor: float = Field(..., description="[φ⁻¹(t)]^{−d}")


# ============ Grid functions ============

class GridFunction(BaseModel):
    """Function tabulated on a uniform grid including the box boundary"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    values: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self) -> "GridFunction":
        if len(self.lower) != len(self.upper) or len(self.lower) != self.values.ndim:
            raise ValueError("box and value array dimensions differ")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box must have positive extent on every axis")
        if min(self.values.shape) < 3:
            raise ValueError("need at least three nodes per axis")
        return self

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(
            (hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.values.shape)
        )

    def axes(self) -> List[np.ndarray]:
        return [
            np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.values.shape)
        ]

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def l2_squared(self) -> float:
        """‖f‖₂² of the multilinear interpolant's node rule"""
        return float(np.sum(self.values ** 2) * self.cell_volume)

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.cell_volume)

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(lower=self.lower, upper=self.upper, values=self.values * factor)
