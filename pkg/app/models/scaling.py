"""
Scaling Function Models - weak-scaling functions φ and their certificates

A ScalingFunction is an increasing φ: [0, ∞) → [0, ∞) together with the
weak-scaling certificate (α̲, ᾱ, c̲, C̄) promising

    c̲ (R/r)^α̲ ≤ φ(R)/φ(r) ≤ C̄ (R/r)^ᾱ    for 0 < r ≤ R.

All families are immutable and evaluate vectorised over numpy arrays.
"""
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _as_output(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


class WsCertificate(BaseModel):
    """Declared weak-scaling exponents and constants"""
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {"alpha_lower": 0.5, "alpha_upper": 1.5, "c_lower": 1.0, "c_upper": 1.0}
        },
    )

    alpha_lower: float = Field(..., gt=0, lt=2, description="Lower scaling exponent α̲")
    alpha_upper: float = Field(..., gt=0, lt=2, description="Upper scaling exponent ᾱ")
    c_lower: float = Field(1.0, gt=0, le=1, description="Lower constant c̲")
    c_upper: float = Field(1.0, ge=1, description="Upper constant C̄")

    @model_validator(mode="after")
    def _check_order(self) -> "WsCertificate":
        if self.alpha_lower > self.alpha_upper:
            raise ValueError("alpha_lower must not exceed alpha_upper")
        return self

    @property
    def ratio_constant(self) -> float:
        """c = C̄/c̲, the constant of the dyadic decay bounds"""
        return self.c_upper / self.c_lower


class ScalingBase(BaseModel):
    """Shared behaviour of every φ family"""
    model_config = ConfigDict(frozen=True)

    certificate: Optional[WsCertificate] = Field(
        None, description="Declared certificate; the family default when omitted"
    )

    # ---- family hooks -------------------------------------------------

    def _value(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _log_slope(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def default_certificate(self) -> WsCertificate:
        raise NotImplementedError

    def rescaled(self, kappa: float) -> "ScalingBase":
        raise NotImplementedError

    def label(self) -> str:
        raise NotImplementedError

    def closed_inverse(self, t: float) -> Optional[float]:
        return None

    def closed_tail_mass(self, eps: float) -> Optional[float]:
        return None

    def closed_small_jump_variance(self, eps: float) -> Optional[float]:
        return None

    def closed_tail_quantile(self, eps: float, u: np.ndarray) -> Optional[np.ndarray]:
        return None

    # ---- public evaluation -------------------------------------------

    @property
    def ws(self) -> WsCertificate:
        """Effective certificate"""
        return self.certificate if self.certificate is not None else self.default_certificate()

    @property
    def alpha_lower(self) -> float:
        return self.ws.alpha_lower

    @property
    def alpha_upper(self) -> float:
        return self.ws.alpha_upper

    @property
    def c_lower(self) -> float:
        return self.ws.c_lower

    @property
    def c_upper(self) -> float:
        return self.ws.c_upper

    def value(self, r):
        """φ(r); 0 at r = 0"""
        scalar = np.ndim(r) == 0
        arr = np.asarray(r, dtype=float)
        return _as_output(self._value(arr), scalar)

    def log_slope(self, r):
        """Local exponent d log φ / d log r at r > 0"""
        scalar = np.ndim(r) == 0
        arr = np.asarray(r, dtype=float)
        return _as_output(np.broadcast_to(self._log_slope(arr), arr.shape).astype(float), scalar)

    def nu1(self, r):
        """ν¹(r) = 1/(r φ(r)) for r > 0"""
        scalar = np.ndim(r) == 0
        arr = np.asarray(r, dtype=float)
        return _as_output(1.0 / (arr * self._value(arr)), scalar)


class PowerLaw(ScalingBase):
    """φ(r) = scale · r^α"""
    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={"example": {"kind": "power", "alpha": 1.5, "scale": 1.0}},
    )

    kind: Literal["power"] = "power"
    alpha: float = Field(..., gt=0, lt=2, description="Exponent α")
    scale: float = Field(1.0, gt=0, description="Multiplicative scale")

    def _value(self, r):
        return self.scale * np.power(r, self.alpha)

    def _log_slope(self, r):
        return np.full(np.shape(r), self.alpha)

    def default_certificate(self) -> WsCertificate:
        return WsCertificate(alpha_lower=self.alpha, alpha_upper=self.alpha)

    def rescaled(self, kappa: float) -> "PowerLaw":
        return PowerLaw(alpha=self.alpha, scale=1.0, certificate=self.certificate)

    def label(self) -> str:
        return f"power:alpha={self.alpha:g},scale={self.scale:g}"

    def closed_inverse(self, t: float) -> float:
        return (t / self.scale) ** (1.0 / self.alpha)

    def closed_tail_mass(self, eps: float) -> float:
        return eps ** (-self.alpha) / (self.alpha * self.scale)

    def closed_small_jump_variance(self, eps: float) -> float:
        return 2.0 * eps ** (2.0 - self.alpha) / ((2.0 - self.alpha) * self.scale)

    def closed_tail_quantile(self, eps: float, u: np.ndarray) -> np.ndarray:
        return eps * np.power(1.0 - u, -1.0 / self.alpha)


class SumOfPowers(ScalingBase):
    """ν¹(h) = Σ c_k h^{−1−α_k}, i.e. φ(h) = 1 / Σ c_k h^{−α_k}"""
    kind: Literal["sum"] = "sum"
    terms: Tuple[Tuple[float, float], ...] = Field(..., description="Pairs (c_k, α_k)")

    @field_validator("terms")
    @classmethod
    def _check_terms(cls, terms):
        if not terms:
            raise ValueError("at least one (c, a) term is required")
        for c, a in terms:
            if c <= 0:
                raise ValueError(f"coefficient must be positive, got {c}")
            if not 0 < a < 2:
                raise ValueError(f"exponent must lie in (0, 2), got {a}")
        return terms

    @property
    def _coeffs(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.array([term[0] for term in self.terms])
        a = np.array([term[1] for term in self.terms])
        return c, a

    def _value(self, r):
        c, a = self._coeffs
        positive = r > 0
        safe = np.where(positive, r, 1.0)
        total = np.sum(c * np.power(safe[..., None], -a), axis=-1)
        return np.where(positive, 1.0 / total, 0.0)

    def _log_slope(self, r):
        c, a = self._coeffs
        weights = c * np.power(r[..., None], -a)
        return np.sum(a * weights, axis=-1) / np.sum(weights, axis=-1)

    def default_certificate(self) -> WsCertificate:
        # Mixtures of powers scale with constants exactly 1
        _, a = self._coeffs
        return WsCertificate(alpha_lower=float(a.min()), alpha_upper=float(a.max()))

    def rescaled(self, kappa: float) -> "SumOfPowers":
        c, a = self._coeffs
        weights = c * kappa ** (-a)
        normalized = weights / weights.sum()
        terms = tuple((float(ck), float(ak)) for ck, ak in zip(normalized, a))
        return SumOfPowers(terms=terms, certificate=self.certificate)

    def label(self) -> str:
        return "sum:" + "+".join(f"(c={c:g},a={a:g})" for c, a in self.terms)

    def closed_tail_mass(self, eps: float) -> float:
        c, a = self._coeffs
        return float(np.sum(c * eps ** (-a) / a))

    def closed_small_jump_variance(self, eps: float) -> float:
        c, a = self._coeffs
        return float(2.0 * np.sum(c * eps ** (2.0 - a) / (2.0 - a)))


class Tabulated(ScalingBase):
    """
    Monotone table of (r, φ(r)) with log-log linear interpolation and
    power-law extrapolation fitted on the first and last few points.
    """
    kind: Literal["table"] = "table"
    r: Tuple[float, ...] = Field(..., description="Strictly increasing radii, r > 0")
    phi: Tuple[float, ...] = Field(..., description="Strictly increasing values φ(r) > 0")
    source: Optional[str] = Field(None, description="CSV file the table came from")

    @model_validator(mode="after")
    def _check_table(self) -> "Tabulated":
        r = np.asarray(self.r)
        phi = np.asarray(self.phi)
        if r.size < 2 or r.size != phi.size:
            raise ValueError("table needs at least two (r, phi) rows of equal length")
        if np.any(r <= 0) or np.any(phi <= 0):
            raise ValueError("table entries must be positive")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(phi) <= 0):
            raise ValueError("table must be strictly increasing in r and phi")
        if self.certificate is None:
            slopes = self.segment_slopes() + list(self._end_slopes())
            if min(slopes) <= 0 or max(slopes) >= 2:
                raise ValueError(
                    f"table log-slopes span [{min(slopes):.3g}, {max(slopes):.3g}], "
                    "outside (0, 2); declare a certificate explicitly"
                )
        return self

    @classmethod
    def from_csv(cls, path: Union[str, Path], certificate: Optional[WsCertificate] = None) -> "Tabulated":
        """Load a two-column CSV r,φ(r); '#' lines are comments"""
        rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(
            r=tuple(rows[:, 0].tolist()),
            phi=tuple(rows[:, 1].tolist()),
            source=str(path),
            certificate=certificate,
        )

    def _log_table(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.log(np.asarray(self.r)), np.log(np.asarray(self.phi))

    def _end_slopes(self) -> Tuple[float, float]:
        lr, lp = self._log_table()
        span = min(4, lr.size)
        head = np.polyfit(lr[:span], lp[:span], 1)[0]
        tail = np.polyfit(lr[-span:], lp[-span:], 1)[0]
        return float(head), float(tail)

    def segment_slopes(self) -> List[float]:
        lr, lp = self._log_table()
        return (np.diff(lp) / np.diff(lr)).tolist()

    def _log_value(self, lr: np.ndarray) -> np.ndarray:
        tr, tp = self._log_table()
        head, tail = self._end_slopes()
        inside = np.interp(lr, tr, tp)
        below = tp[0] + head * (lr - tr[0])
        above = tp[-1] + tail * (lr - tr[-1])
        return np.where(lr < tr[0], below, np.where(lr > tr[-1], above, inside))

    def _value(self, r):
        positive = r > 0
        lr = np.log(np.where(positive, r, 1.0))
        return np.where(positive, np.exp(self._log_value(lr)), 0.0)

    def _log_slope(self, r):
        tr, _ = self._log_table()
        head, tail = self._end_slopes()
        slopes = np.asarray(self.segment_slopes())
        lr = np.log(r)
        idx = np.clip(np.searchsorted(tr, lr, side="right") - 1, 0, slopes.size - 1)
        return np.where(lr < tr[0], head, np.where(lr >= tr[-1], tail, slopes[idx]))

    def default_certificate(self) -> WsCertificate:
        # Piecewise log-linear interpolation scales with constants exactly 1
        slopes = self.segment_slopes() + list(self._end_slopes())
        return WsCertificate(alpha_lower=min(slopes), alpha_upper=max(slopes))

    def rescaled(self, kappa: float) -> "Tabulated":
        base = self.value(kappa)
        return Tabulated(
            r=tuple((np.asarray(self.r) / kappa).tolist()),
            phi=tuple((np.asarray(self.phi) / base).tolist()),
            source=self.source,
            certificate=self.certificate,
        )

    def label(self) -> str:
        return f"table:{self.source or '<inline>'}"


ScalingFunction = Annotated[Union[PowerLaw, SumOfPowers, Tabulated], Field(discriminator="kind")]
