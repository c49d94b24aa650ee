"""
Ladder Models - exponent ladder, pair geometry and dyadic boxes
"""
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class LadderState(BaseModel):
    """Partial upper bound H(q, l): exponent q on level l"""
    model_config = ConfigDict(frozen=True)

    q: float = Field(..., ge=0, le=1, description="Exponent q ∈ [0, 1]")
    l: int = Field(..., ge=0, description="Level l ∈ {0, …, d−1}")


class LadderTransition(BaseModel):
    """One edge of the upgrade schedule"""
    model_config = ConfigDict(frozen=True)

    source: LadderState
    target: LadderState
    rule: Literal["step", "threshold_step", "next_level", "final_upgrade"]


class ThetaTable(BaseModel):
    """θ_l increments and N_l step counts for (d, α̲, ᾱ)"""
    model_config = ConfigDict(frozen=True)

    d: int = Field(..., ge=1)
    alpha_lower: float
    alpha_upper: float
    theta: List[float] = Field(..., description="θ_l for l = 0, …, d−1")
    steps: List[int] = Field(..., description="N_l = inf{n ≥ 1: n θ_l ≥ 1/(1+α̲)}")
    b0: float = Field(..., description="α̲/(α̲+1)")
    k0: float = Field(..., description="(α̲+1)/(ᾱ+1)")

    @property
    def threshold(self) -> float:
        """1/(1+α̲), the exponent where a level is exhausted"""
        return 1.0 / (1.0 + self.alpha_lower)


class GeometryContext(BaseModel):
    """
    Dyadic geometry of a pair (x₀, y₀) at time t.

    Axes are listed after sorting by |Δ^i| (ascending); `order[k]` is the
    original 0-based axis of sorted position k. n is None for Δ^i = 0,
    standing for −∞. i0 is 1-based; d + 1 means no axis is far.
    """
    model_config = ConfigDict(frozen=True)

    t: float
    kappa: float
    deltas: List[float] = Field(..., description="|Δ^i| in sorted order")
    order: List[int]
    n: List[Optional[int]]
    radii: List[float] = Field(..., description="R_i = 2^{n_i} κ, 0 for n_i = −∞")
    i0: int

    @property
    def d(self) -> int:
        return len(self.n)

    def n_at(self, j: int) -> Optional[int]:
        """n_j for 1-based sorted index j"""
        return self.n[j - 1]

    def radius_at(self, j: int) -> float:
        return self.radii[j - 1]


class BoxIndex(BaseModel):
    """
    Cell of the dyadic decomposition of ℝ^d.

    k = 0 is the single cell D₀ = {some |w^i| < 1} ∪ (−2, 2)^d; for k ≥ 1 the
    cell is Π_i ε^i [2^{γ^i}, 2^{γ^i + 1}) with Σ γ^i = k.
    """
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=0)
    gamma: Optional[Tuple[int, ...]] = None
    signs: Optional[Tuple[int, ...]] = None

    @model_validator(mode="after")
    def _check_cell(self) -> "BoxIndex":
        if self.k == 0:
            if self.gamma is not None or self.signs is not None:
                raise ValueError("D0 carries no gamma or signs")
            return self
        if self.gamma is None or self.signs is None or len(self.gamma) != len(self.signs):
            raise ValueError("boxes with k >= 1 need gamma and signs of equal length")
        if any(g < 0 for g in self.gamma) or sum(self.gamma) != self.k:
            raise ValueError(f"gamma {self.gamma} must be nonnegative with sum {self.k}")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")
        return self

    @property
    def is_d0(self) -> bool:
        return self.k == 0

    def bounds(self) -> List[Tuple[float, float]]:
        """Half-open interval [lo, hi) per axis for positive signs, (−hi, −lo] otherwise"""
        if self.is_d0:
            raise ValueError("D0 is not a product of intervals")
        return [(2.0 ** g, 2.0 ** (g + 1)) for g in self.gamma]

    def contains(self, w: Sequence[float]) -> bool:
        """Membership of a point in normalised coordinates w = (z − y₀)/κ"""
        point = np.asarray(w, dtype=float)
        magnitude, sign = np.abs(point), np.sign(point)
        in_d0 = bool(np.any(magnitude < 1) or np.all(magnitude < 2))
        if self.is_d0:
            return in_d0
        if magnitude.size != len(self.gamma) or in_d0:
            return False
        return all(
            s == e and lo <= m < hi
            for m, s, e, (lo, hi) in zip(magnitude, sign, self.signs, self.bounds())
        )

    def intersects(self, other: "BoxIndex") -> bool:
        """Whether the two cells share a point"""
        if self.is_d0 or other.is_d0:
            return self.is_d0 and other.is_d0
        if len(self.gamma) != len(other.gamma):
            return False
        for (lo_a, hi_a), (lo_b, hi_b), sa, sb in zip(self.bounds(), other.bounds(), self.signs, other.signs):
            if sa != sb or max(lo_a, lo_b) >= min(hi_a, hi_b):
                return False
        return True

    def label(self) -> str:
        if self.is_d0:
            return "D0"
        return f"D{self.k}[gamma={list(self.gamma)},signs={list(self.signs)}]"
