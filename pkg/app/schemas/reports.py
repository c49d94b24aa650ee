"""
Report Schemas - results of checks and experiments

Every numeric check returns one of these models. Experiment-level results
are wrapped in ExperimentReport, the only object written to disk.
"""
import json
from functools import reduce
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.scaling import WsCertificate

SCHEMA_VERSION = "1.0"


class Verdict(str, Enum):
    """Outcome of a verification"""
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"

    @property
    def exit_status(self) -> int:
        return {Verdict.PASS: 0, Verdict.FAIL: 1, Verdict.INCONCLUSIVE: 2}[self]


# ============ scaling ============

class WsViolation(BaseModel):
    """One sampled pair breaking the weak-scaling inequalities"""
    r: float
    R: float
    ratio: float = Field(..., description="Measured φ(R)/φ(r)")
    lower: float = Field(..., description="c̲ (R/r)^α̲")
    upper: float = Field(..., description="C̄ (R/r)^ᾱ")


class WsReport(BaseModel):
    """Brute-force scan of the weak-scaling certificate"""
    family: str
    certificate: WsCertificate
    n_samples: int
    n_pairs: int
    n_violations: int
    violations: List[WsViolation] = Field(default_factory=list, description="Worst violations first")
    worst_ratio: float = Field(..., description="max over pairs of max(lower/ratio, ratio/upper); ≤ 1 when clean")
    monotone: bool
    fitted_c_lower: float = Field(..., description="Largest c̲ consistent with the sampled pairs")
    fitted_c_upper: float = Field(..., description="Smallest C̄ consistent with the sampled pairs")

    @property
    def passed(self) -> bool:
        return self.monotone and self.n_violations == 0


class IntegrabilityReport(BaseModel):
    """Lévy integrability of ν¹ against the certificate bounds"""
    small_part: float = Field(..., description="∫₀¹ s/φ(s) ds")
    small_lower: float
    small_upper: float
    large_part: float = Field(..., description="N(1) = ∫₁^∞ ν¹(s) ds")
    large_lower: float
    large_upper: float

    @property
    def passed(self) -> bool:
        tol = 1e-9
        return (
            self.small_lower * (1 - tol) <= self.small_part <= self.small_upper * (1 + tol)
            and self.large_lower * (1 - tol) <= self.large_part <= self.large_upper * (1 + tol)
        )


# ============ energy ============

class NashRow(BaseModel):
    scale: float
    l2_squared: float
    energy: float
    ratio: float


class NashReport(BaseModel):
    """Nash-ratio spot check over dilations of a bump"""
    rows: List[NashRow]
    max_ratio: float
    min_ratio: float
    spread: float
    max_spread: float
    verdict: Verdict


class EnergyGapRow(BaseModel):
    lam: float
    energy: float
    truncated_energy: float
    gap: float
    bound: float


class EnergyGapReport(BaseModel):
    """Energy lost by truncating jumps longer than λ"""
    constant: float = Field(..., description="c in gap ≤ c ‖f‖² / φ(λ)")
    l2_squared: float
    rows: List[EnergyGapRow]

    @property
    def passed(self) -> bool:
        return all(-1e-9 * row.energy <= row.gap <= row.bound for row in self.rows)


# ============ verify ============

class DensityHistogram(BaseModel):
    """Histogram estimate of a transition density"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    edges: List[np.ndarray] = Field(..., description="Bin edges per coordinate")
    counts: np.ndarray = Field(..., description="Counts per cell")
    n_paths: int
    overflow: int = Field(..., description="Samples outside the box")

    @property
    def dim(self) -> int:
        return len(self.edges)

    @property
    def cell_volumes(self) -> np.ndarray:
        widths = [np.diff(e) for e in self.edges]
        return reduce(np.multiply.outer, widths)

    @property
    def density(self) -> np.ndarray:
        """Probability per unit volume in every cell"""
        return self.counts / (self.n_paths * self.cell_volumes)

    def centers(self) -> np.ndarray:
        """Cell centres, shape counts.shape + (d,)"""
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack(grids, axis=-1)


class RatioCell(BaseModel):
    center: List[float]
    density: float
    envelope: float
    ratio: float
    count: int


class RatioReport(BaseModel):
    """Empirical density against the heat-kernel envelope"""
    t: float
    kappa: float
    cells: List[RatioCell] = Field(..., description="Trusted cells only")
    n_trusted: int
    min_count: int
    c1: Optional[float] = None
    c2: Optional[float] = None
    spread: Optional[float] = None
    max_spread: float
    coverage: Dict[str, bool] = Field(default_factory=dict)
    verdict: Verdict


class ControlReport(BaseModel):
    """
    Negative control judged against the main run's constant band.

    FAIL means some trusted cell is inconsistent with [c₁/(1+m), c₂(1+m)],
    i.e. the control is rejected.
    """
    kind: Literal["wrong_t", "wrong_phi"]
    t: float
    family: str = Field(..., description="Scaling function the envelope was evaluated with")
    factor: Optional[float] = Field(None, description="Time factor of the wrong_t control")
    band_lower: Optional[float] = None
    band_upper: Optional[float] = None
    margin: float
    n_trusted: int
    n_outside: int = 0
    worst_escape: Optional[float] = Field(None, description="Largest factor by which a cell interval misses the band")
    verdict: Verdict

    @property
    def rejected(self) -> bool:
        return self.verdict == Verdict.FAIL


class ExitTailRow(BaseModel):
    r: float
    radius: float
    exits: int
    n_paths: int
    probability: float
    ci_low: float
    ci_high: float
    normalized: float = Field(..., description="P̂ · φ(φ⁻¹(t) r) / t")
    normalized_low: float
    normalized_high: float


class ExitTailReport(BaseModel):
    t: float
    rows: List[ExitTailRow]
    sup_const: Optional[float] = None
    sup_r: Optional[float] = None
    verdict: Verdict


class ExitMomentRow(BaseModel):
    r: float
    horizon: float
    n_paths: int
    n_unexited: int
    mean: float
    ci_low: float
    ci_high: float
    second_moment: float
    mean_ratio: float = Field(..., description="E[τ]/φ(r)")
    second_ratio: float = Field(..., description="E[τ²]/φ(r)²")
    missed_exit_ok: bool = Field(..., description="σ(eps)·√T ≤ r/100")
    degenerate_cutoff: bool = Field(..., description="eps > r/10")
    verdict: Verdict


class ExitMomentReport(BaseModel):
    rows: List[ExitMomentRow]
    mean_spread: Optional[float] = None
    second_spread: Optional[float] = None
    max_spread: float
    verdict: Verdict


class DiagonalRow(BaseModel):
    t: float
    kappa: float
    count: int
    density: float
    normalized: float = Field(..., description="density · φ⁻¹(t)^d")
    ci_low: float
    ci_high: float


class DiagonalReport(BaseModel):
    rows: List[DiagonalRow]
    spread: Optional[float] = None
    slope: Optional[float] = None
    expected_slope: Optional[float] = None
    verdict: Verdict


class ScaleEquivarianceReport(BaseModel):
    kappa: float
    n_bins: int
    mismatched_bins: int
    overflow_original: int
    overflow_rescaled: int

    @property
    def identical(self) -> bool:
        return self.mismatched_bins == 0 and self.overflow_original == self.overflow_rescaled


# ============ ladder ============

class FrakNViolation(BaseModel):
    delta: int
    kappa: float
    value: float
    lower: float
    upper: float


class FrakNReport(BaseModel):
    """Dyadic decay factor against its two-sided power bounds"""
    constant: float = Field(..., description="c = C̄/c̲")
    n_checked: int
    worst_slack: float = Field(..., description="min over checks of log2(bound/value), ≥ 0 when clean")
    violations: List[FrakNViolation] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


class CaseReport(BaseModel):
    """One evaluation of the case inequalities of the exponent-upgrade step"""
    d: int
    l: int
    i0: int
    q: float
    theta: float = Field(..., description="θ_l^{i₀}")
    case: Literal["trivial", "I", "II"]
    j0: Optional[int] = None
    log2_lhs: float
    log2_rhs: float
    constant: float = Field(..., description="c = (C̄/c̲)^d")
    margin: float = Field(..., description="log2(c·RHS/LHS)")
    exponent_gap: Optional[float] = Field(None, description="Case II exponent inequality value, ≥ 0")

    @property
    def holds(self) -> bool:
        exponent_ok = self.exponent_gap is None or self.exponent_gap >= -1e-9
        return self.margin >= -1e-9 and exponent_ok


# ============ experiments ============

class ExperimentReport(BaseModel):
    """Versioned envelope written for every experiment"""
    schema_version: str = SCHEMA_VERSION
    experiment: str
    config_digest: str
    seed: Optional[int] = None
    n_paths: Optional[int] = None
    wall_time: float = 0.0
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    summary: Dict[str, Any] = Field(default_factory=dict)
    payload: Dict[str, Any] = Field(default_factory=dict, description="cells | rows | tables")
    verdict: Verdict

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, stable float repr"""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"
